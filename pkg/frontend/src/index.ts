export {
  CliError,
  CorruptContainerError,
  DegenerateInputError,
  Flow4dError,
  IoError,
  ShapeError,
  UsageError,
} from "./errors.js";
export { crc32 } from "./crc32.js";
export { PyFloat, canonicalJson, pyFloatRepr } from "./pyjson.js";
export type { JsonValue } from "./pyjson.js";
export {
  ALIGN,
  MAGIC,
  asTensor,
  pack,
  readContainer,
  unpack,
  writeContainer,
} from "./container.js";
export type { Container, Tensor, TensorInput } from "./container.js";
export { resolveBin, runCli } from "./cli.js";
export type { CliOptions, CliResult } from "./cli.js";
export {
  decompose,
  evalTracks,
  lossCheck,
  synthScene,
  trackScene,
  validateDecomposeInput,
  validateTrackSet,
} from "./ops.js";
export type {
  DecomposeInput,
  DecomposeOptions,
  Decomposition,
  EvalOptions,
  EvalReport,
  LossCheckOptions,
  LossReport,
  Mode,
  SubsetScores,
  SynthOptions,
  TrackOptions,
  TrackSetInput,
} from "./ops.js";
