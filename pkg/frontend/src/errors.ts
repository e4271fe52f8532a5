/** Error hierarchy for the exporter. */

/** Base class; the CLI reports these as `error: <message>` and exits 1. */
export class ExporterError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** A file (or in-memory matrix) violates the OODM/OODL container rules. */
export class FormatError extends ExporterError {}

/** The model or dataset breaks the export contract. */
export class ExportError extends ExporterError {}
