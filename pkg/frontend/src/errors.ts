/**
 * Error taxonomy for the flow4d boundary.
 *
 * Local validation problems throw before anything is written or spawned;
 * CLI failures are mapped from the process exit code (2 usage, 3
 * degenerate input, 4 I/O) so callers can branch without parsing stderr.
 */

export class Flow4dError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** An input array does not have the shape the boundary contract expects. */
export class ShapeError extends Flow4dError {}

/** Container bytes failed the checksum or a structural check. */
export class CorruptContainerError extends Flow4dError {}

/** The CLI rejected the invocation (exit code 2). */
export class UsageError extends Flow4dError {}

/** The CLI found the input geometrically unusable (exit code 3). */
export class DegenerateInputError extends Flow4dError {}

/** The CLI could not read or write a file, or could not be run (exit 4). */
export class IoError extends Flow4dError {}

/** The CLI exited with a code outside the documented set. */
export class CliError extends Flow4dError {
  constructor(message: string, public readonly exitCode: number | null) {
    super(message);
  }
}
