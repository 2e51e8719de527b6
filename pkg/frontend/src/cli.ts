import { spawnSync } from "node:child_process";

import {
  CliError,
  CorruptContainerError,
  DegenerateInputError,
  IoError,
  UsageError,
} from "./errors.js";

export interface CliOptions {
  /** Executable to run. Defaults to $FLOW4D_BIN, then "flow4d" on PATH. */
  bin?: string;
  /** Worker thread cap, forwarded as F4R_THREADS. */
  threads?: number;
  /** Working directory for the subprocess. */
  cwd?: string;
}

export interface CliResult {
  stdout: string;
  stderr: string;
}

const MAX_OUTPUT = 64 * 1024 * 1024;

export function resolveBin(opts?: CliOptions): string {
  return opts?.bin ?? process.env.FLOW4D_BIN ?? "flow4d";
}

/**
 * Run one CLI subcommand and map its exit code to a typed error.
 *
 * Exit contract: 0 ok, 2 usage, 3 degenerate input, 4 I/O or corrupt file.
 * Anything else (signals included) surfaces as CliError.
 */
export function runCli(args: string[], opts?: CliOptions): CliResult {
  const bin = resolveBin(opts);
  const env = { ...process.env };
  if (opts?.threads !== undefined) {
    if (!Number.isInteger(opts.threads) || opts.threads < 1) {
      throw new UsageError(`threads must be a positive integer, got ${opts.threads}`);
    }
    env.F4R_THREADS = String(opts.threads);
  }

  const result = spawnSync(bin, args, {
    encoding: "utf8",
    env,
    cwd: opts?.cwd,
    maxBuffer: MAX_OUTPUT,
  });

  if (result.error !== undefined) {
    throw new IoError(`cannot run ${bin}: ${result.error.message}`);
  }

  const stderr = (result.stderr ?? "").trim();
  if (result.status === 0) {
    return { stdout: result.stdout ?? "", stderr };
  }

  const detail =
    stderr !== "" ? stderr.replace(/^error: /, "") : `exit code ${result.status}`;
  switch (result.status) {
    case 2:
      throw new UsageError(detail);
    case 3:
      throw new DegenerateInputError(detail);
    case 4:
      // The CLI uses 4 for both unreadable paths and failed integrity
      // checks; tell them apart by the container error vocabulary.
      if (
        /corrupt|checksum|bad magic|too short|header|format version|dtype|payload|tensor|meta is not an object/i.test(
          detail,
        )
      ) {
        throw new CorruptContainerError(detail);
      }
      throw new IoError(detail);
    default:
      throw new CliError(
        `${bin} ${args[0] ?? ""} failed (${result.status ?? `signal ${result.signal}`}): ${detail}`,
        result.status,
      );
  }
}
