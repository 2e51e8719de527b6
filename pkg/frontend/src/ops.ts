/**
 * Typed operations over the flow4d CLI.
 *
 * Every function here shells out to the CLI and talks to it through
 * container files in a private temp directory, so results are bitwise
 * identical to what the command line produces.  Input arrays are copied
 * into the container encoding and never mutated.
 */

import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { CliOptions, runCli } from "./cli.js";
import {
  Tensor,
  TensorInput,
  asTensor,
  readContainer,
  writeContainer,
} from "./container.js";
import { ShapeError, UsageError } from "./errors.js";

export type Mode = "closed_form" | "irls";

function shapeText(shape: readonly number[]): string {
  return `(${shape.join(", ")})`;
}

function requireMap3(t: Tensor, name: string): [number, number] {
  if (t.shape.length !== 3 || t.shape[2] !== 3 || t.shape[0] < 1 || t.shape[1] < 1) {
    throw new ShapeError(
      `${name}: expected shape (H, W, 3), got ${shapeText(t.shape)}`,
    );
  }
  return [t.shape[0], t.shape[1]];
}

function requirePlane(t: Tensor, name: string, h: number, w: number): void {
  if (t.shape.length !== 2 || t.shape[0] !== h || t.shape[1] !== w) {
    throw new ShapeError(
      `${name}: expected shape ${shapeText([h, w])}, got ${shapeText(t.shape)}`,
    );
  }
}

function requireLike3(t: Tensor, name: string, h: number, w: number): void {
  if (t.shape.length !== 3 || t.shape[0] !== h || t.shape[1] !== w || t.shape[2] !== 3) {
    throw new ShapeError(
      `${name}: expected shape ${shapeText([h, w, 3])}, got ${shapeText(t.shape)}`,
    );
  }
}

function requireInt(value: number, name: string, min: number): void {
  if (!Number.isInteger(value) || value < min) {
    throw new UsageError(`${name} must be an integer >= ${min}, got ${value}`);
  }
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "f4r-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

// ---------------------------------------------------------------- decompose

export interface DecomposeInput {
  /** Anchor-frame 3D points, shape (H, W, 3). */
  points: TensorInput;
  /** Points after motion, shape (H, W, 3).  Give this or `flow`. */
  pointsMoved?: TensorInput;
  /** Scene flow, shape (H, W, 3).  Give this or `pointsMoved`. */
  flow?: TensorInput;
  /** Pose support weights, shape (H, W). */
  poseWeight: TensorInput;
  /** Optional confidence map, shape (H, W); unused by the solve. */
  confidence?: TensorInput;
  /** Validity mask (nonzero = valid), shape (H, W). */
  valid: TensorInput;
}

export interface DecomposeOptions extends CliOptions {
  mode?: Mode;
}

export interface Decomposition {
  rotation: Tensor;
  translation: Tensor;
  residual: number;
  pointsViewpoint: Tensor;
  pointsTracking: Tensor;
  flowCamera: Tensor;
  flowObject: Tensor;
  valid: Tensor;
  mode: Mode;
}

/**
 * Check a decompose input and lay it out in the canonical pair-container
 * tensor order.  Returns the ordered tensors plus the grid size.
 */
export function validateDecomposeInput(input: DecomposeInput): {
  tensors: Map<string, Tensor>;
  height: number;
  width: number;
} {
  const points = asTensor("points", input.points);
  const [h, w] = requireMap3(points, "points");
  const hasMoved = input.pointsMoved !== undefined;
  const hasFlow = input.flow !== undefined;
  if (hasMoved === hasFlow) {
    throw new ShapeError("exactly one of pointsMoved / flow must be given");
  }
  const tensors = new Map<string, Tensor>();
  tensors.set("points", points);
  if (hasMoved) {
    const moved = asTensor("pointsMoved", input.pointsMoved!);
    requireLike3(moved, "pointsMoved", h, w);
    tensors.set("points_moved", moved);
  } else {
    const flow = asTensor("flow", input.flow!);
    requireLike3(flow, "flow", h, w);
    tensors.set("flow", flow);
  }
  const weight = asTensor("poseWeight", input.poseWeight);
  requirePlane(weight, "poseWeight", h, w);
  tensors.set("pose_weight", weight);
  if (input.confidence !== undefined) {
    const conf = asTensor("confidence", input.confidence);
    requirePlane(conf, "confidence", h, w);
    tensors.set("confidence", conf);
  }
  const valid = asTensor("valid", input.valid);
  requirePlane(valid, "valid", h, w);
  tensors.set("valid", valid);
  return { tensors, height: h, width: w };
}

/**
 * Solve the pair's camera motion and split its flow into camera-induced
 * and object parts.  Returns the decomposition tensors; `residual` is the
 * weighted RMS alignment error of the pose solve.
 */
export function decompose(
  input: DecomposeInput,
  opts?: DecomposeOptions,
): Decomposition {
  const mode: Mode = opts?.mode ?? "closed_form";
  if (mode !== "closed_form" && mode !== "irls") {
    throw new UsageError(`mode must be closed_form or irls, got ${mode}`);
  }
  const { tensors } = validateDecomposeInput(input);
  return withTempDir((dir) => {
    const inPath = join(dir, "pair.f4r");
    const outPath = join(dir, "dec.f4r");
    writeContainer(inPath, tensors, { kind: "pair" });
    runCli(["decompose", "--in", inPath, "--mode", mode, "--out", outPath], opts);
    const box = readContainer(outPath);
    const get = (name: string): Tensor => {
      const t = box.tensors.get(name);
      if (t === undefined) {
        throw new ShapeError(`decomposition output is missing ${name}`);
      }
      return t;
    };
    return {
      rotation: get("rotation"),
      translation: get("translation"),
      residual: get("residual").data[0],
      pointsViewpoint: get("points_viewpoint"),
      pointsTracking: get("points_tracking"),
      flowCamera: get("flow_camera"),
      flowObject: get("flow_object"),
      valid: get("valid"),
      mode,
    };
  });
}

// --------------------------------------------------------------------- eval

export interface TrackSetInput {
  /** Track positions, shape (frames, points, 3) or (frames, H, W, 3). */
  positions: TensorInput;
  /** Validity mask matching positions minus the last axis. */
  valid: TensorInput;
}

export interface EvalOptions extends CliOptions {
  /** APD thresholds in meters; default 0.1, 0.3, 0.5, 1.0. */
  thresholds?: number[];
  /** Score at most this many leading frames; default 64. */
  maxFrames?: number;
  /** Median scale alignment before scoring; default true. */
  align?: boolean;
  /** Also score the GT dynamic region (scene-container GT only). */
  dynamicSubset?: boolean;
}

export interface SubsetScores {
  epe: number;
  apd: Record<string, number>;
  apdMean: number;
}

export interface EvalReport {
  scale: number;
  framesEvaluated: number;
  samples: number;
  epe: number;
  /** Percent within each threshold, keyed by the threshold text. */
  apd: Record<string, number>;
  apdMean: number;
  dynamic?: SubsetScores;
  /** The raw report, byte-identical to the CLI output. */
  text: string;
}

/** Check a track set and return its tensors in container order. */
export function validateTrackSet(input: TrackSetInput): Map<string, Tensor> {
  const positions = asTensor("positions", input.positions);
  const s = positions.shape;
  const rankOk = (s.length === 3 || s.length === 4) && s[s.length - 1] === 3;
  if (!rankOk || s[0] < 1) {
    throw new ShapeError(
      "positions: expected shape (frames, points, 3) or (frames, H, W, 3), " +
        `got ${shapeText(s)}`,
    );
  }
  const valid = asTensor("valid", input.valid);
  const want = s.slice(0, -1);
  const sameShape =
    valid.shape.length === want.length &&
    valid.shape.every((d, i) => d === want[i]);
  if (!sameShape) {
    throw new ShapeError(
      `valid: expected shape ${shapeText(want)} to match positions, ` +
        `got ${shapeText(valid.shape)}`,
    );
  }
  return new Map([
    ["positions", positions],
    ["valid", valid],
  ]);
}

function parseReportNumber(text: string): number {
  if (text === "nan") return NaN;
  if (text === "inf") return Infinity;
  if (text === "-inf") return -Infinity;
  return Number(text);
}

function parseReport(text: string): EvalReport {
  const plain: Record<string, number> = {};
  const apd: Record<string, number> = {};
  const dynApd: Record<string, number> = {};
  for (const line of text.split("\n")) {
    if (line === "") continue;
    const cut = line.indexOf(" ");
    const key = line.slice(0, cut);
    const value = parseReportNumber(line.slice(cut + 1));
    if (key.startsWith("dynamic_apd_") && key !== "dynamic_apd_mean") {
      dynApd[key.slice("dynamic_apd_".length)] = value;
    } else if (key.startsWith("apd_") && key !== "apd_mean") {
      apd[key.slice("apd_".length)] = value;
    } else {
      plain[key] = value;
    }
  }
  const report: EvalReport = {
    scale: plain.scale,
    framesEvaluated: plain.frames_evaluated,
    samples: plain.samples,
    epe: plain.epe,
    apd,
    apdMean: plain.apd_mean,
    text,
  };
  if ("dynamic_epe" in plain) {
    report.dynamic = {
      epe: plain.dynamic_epe,
      apd: dynApd,
      apdMean: plain.dynamic_apd_mean,
    };
  }
  return report;
}

/**
 * Score predicted tracks against ground truth.
 *
 * Either side may be a path to an existing container instead of in-memory
 * arrays; the GT path may name a scene container, which also enables
 * `dynamicSubset`.
 */
export function evalTracks(
  pred: TrackSetInput | string,
  gt: TrackSetInput | string,
  opts?: EvalOptions,
): EvalReport {
  if (opts?.thresholds !== undefined) {
    if (opts.thresholds.length === 0) {
      throw new UsageError("thresholds must not be empty");
    }
    for (const t of opts.thresholds) {
      if (!Number.isFinite(t) || t <= 0) {
        throw new UsageError(`thresholds must be positive numbers, got ${t}`);
      }
    }
  }
  if (opts?.maxFrames !== undefined) requireInt(opts.maxFrames, "maxFrames", 1);
  const predTensors = typeof pred === "string" ? null : validateTrackSet(pred);
  const gtTensors = typeof gt === "string" ? null : validateTrackSet(gt);
  return withTempDir((dir) => {
    let predPath: string;
    if (predTensors === null) {
      predPath = pred as string;
    } else {
      predPath = join(dir, "pred.f4r");
      writeContainer(predPath, predTensors, { kind: "tracks" });
    }
    let gtPath: string;
    if (gtTensors === null) {
      gtPath = gt as string;
    } else {
      gtPath = join(dir, "gt.f4r");
      writeContainer(gtPath, gtTensors, { kind: "tracks" });
    }
    const outPath = join(dir, "report.txt");
    const args = ["eval", "--pred", predPath, "--gt", gtPath, "--out", outPath];
    if (opts?.thresholds !== undefined) {
      args.push("--thresholds", opts.thresholds.map(String).join(","));
    }
    if (opts?.maxFrames !== undefined) {
      args.push("--max-frames", String(opts.maxFrames));
    }
    if (opts?.dynamicSubset) args.push("--dynamic-subset");
    if (opts?.align === false) args.push("--no-align");
    runCli(args, opts);
    const text = readFileSync(outPath, "utf8");
    return parseReport(text);
  });
}

// --------------------------------------------------------------- loss-check

export interface LossCheckOptions extends CliOptions {
  seed?: number;
  /** Scene grid size as [H, W]; default [16, 16]. */
  hw?: [number, number];
  dynamicFraction?: number;
  displacement?: number;
  /** Prediction noise level in meters; default 0.01. */
  sigma?: number;
  gradMode?: "analytic" | "fd";
}

export interface LossReport {
  /** Loss terms: point, flow, motion2d, pose, viewpoint. */
  terms: Record<string, number>;
  total: number;
  /** The raw stdout, byte-identical to the CLI output. */
  text: string;
}

/** Evaluate the training losses on a seeded perturbed scene. */
export function lossCheck(opts?: LossCheckOptions): LossReport {
  const args = ["loss-check"];
  if (opts?.seed !== undefined) {
    requireInt(opts.seed, "seed", 0);
    args.push("--seed", String(opts.seed));
  }
  if (opts?.hw !== undefined) {
    requireInt(opts.hw[0], "hw[0]", 1);
    requireInt(opts.hw[1], "hw[1]", 1);
    args.push("--hw", String(opts.hw[0]), String(opts.hw[1]));
  }
  if (opts?.dynamicFraction !== undefined) {
    args.push("--dynamic-fraction", String(opts.dynamicFraction));
  }
  if (opts?.displacement !== undefined) {
    args.push("--displacement", String(opts.displacement));
  }
  if (opts?.sigma !== undefined) args.push("--sigma", String(opts.sigma));
  if (opts?.gradMode !== undefined) args.push("--grad-mode", opts.gradMode);
  const { stdout } = runCli(args, opts);
  const terms: Record<string, number> = {};
  let total = NaN;
  for (const line of stdout.split("\n")) {
    if (!line.startsWith("loss_")) continue;
    const cut = line.indexOf(" ");
    const key = line.slice("loss_".length, cut);
    const value = parseReportNumber(line.slice(cut + 1));
    if (key === "total") total = value;
    else terms[key] = value;
  }
  return { terms, total, text: stdout };
}

// ------------------------------------------------------------ scene helpers

export interface SynthOptions extends CliOptions {
  seed?: number;
  /** Scene grid size as [H, W]; default [64, 64]. */
  hw?: [number, number];
  frames?: number;
  dynamicFraction?: number;
  displacement?: number;
  rotation?: number;
  translation?: number;
  focal?: number;
  pixelConvention?: "center" | "corner";
}

/** Generate a synthetic ground-truth scene container at `outPath`. */
export function synthScene(outPath: string, opts?: SynthOptions): void {
  const args = ["synth", "--out", outPath];
  if (opts?.seed !== undefined) {
    requireInt(opts.seed, "seed", 0);
    args.push("--seed", String(opts.seed));
  }
  if (opts?.hw !== undefined) {
    requireInt(opts.hw[0], "hw[0]", 1);
    requireInt(opts.hw[1], "hw[1]", 1);
    args.push("--hw", String(opts.hw[0]), String(opts.hw[1]));
  }
  if (opts?.frames !== undefined) {
    requireInt(opts.frames, "frames", 2);
    args.push("--frames", String(opts.frames));
  }
  if (opts?.dynamicFraction !== undefined) {
    args.push("--dynamic-fraction", String(opts.dynamicFraction));
  }
  if (opts?.displacement !== undefined) {
    args.push("--displacement", String(opts.displacement));
  }
  if (opts?.rotation !== undefined) args.push("--rotation", String(opts.rotation));
  if (opts?.translation !== undefined) {
    args.push("--translation", String(opts.translation));
  }
  if (opts?.focal !== undefined) args.push("--focal", String(opts.focal));
  if (opts?.pixelConvention !== undefined) {
    args.push("--pixel-convention", opts.pixelConvention);
  }
  runCli(args, opts);
}

export interface TrackOptions extends CliOptions {
  mode?: Mode;
  /** Cross-pair scale alignment; default true. */
  align?: boolean;
  /** Also write the trajectories as CSV text here. */
  asciiOut?: string;
}

/** Build a tracks container from a scene container. */
export function trackScene(
  scenePath: string,
  outPath: string,
  opts?: TrackOptions,
): void {
  const args = ["track", "--in", scenePath, "--out", outPath];
  if (opts?.mode !== undefined) args.push("--mode", opts.mode);
  if (opts?.align === false) args.push("--no-align");
  if (opts?.asciiOut !== undefined) args.push("--ascii-out", opts.asciiOut);
  runCli(args, opts);
}
