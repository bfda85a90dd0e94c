#!/usr/bin/env node
/**
 * hsic-convert convert --spec conversion.json
 * hsic-convert inspect --file cube.hsic
 *
 * Exit codes: 0 ok, 2 usage, 3 data/format.
 */

import { ConversionError, convert, loadSpec } from "./convert.js";
import { HsicFormatError } from "./hsic.js";
import { inspect } from "./inspect.js";
import { MatFormatError } from "./mat.js";

function flagValue(args: string[], name: string): string {
  const at = args.indexOf(name);
  if (at < 0 || at + 1 >= args.length) {
    throw new UsageError(`missing required flag ${name}`);
  }
  return args[at + 1];
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === "convert") {
      const spec = loadSpec(flagValue(rest, "--spec"));
      const summary = convert(spec);
      console.log(JSON.stringify(summary));
      return 0;
    }
    if (command === "inspect") {
      const summary = inspect(flagValue(rest, "--file"));
      console.log(JSON.stringify(summary));
      return 0;
    }
    throw new UsageError(`unknown command ${command ?? "(none)"}; use convert or inspect`);
  } catch (e) {
    if (e instanceof UsageError) {
      console.error(`usage error: ${e.message}`);
      return 2;
    }
    if (e instanceof ConversionError || e instanceof MatFormatError ||
        e instanceof HsicFormatError || (e as NodeJS.ErrnoException)?.code === "ENOENT") {
      console.error(`error: ${(e as Error).message}`);
      return 3;
    }
    throw e;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
