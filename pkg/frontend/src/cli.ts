/**
 * Subprocess plumbing: every call writes its inputs into a fresh temp
 * directory, runs the engine's CLI, and reads the outputs back. The engine
 * binary is `topogrid` on PATH, or set TOPOGRID_CLI (e.g.
 * "python3 -m topogrid").
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export class EngineError extends Error {}

function command(): string[] {
  const env = process.env.TOPOGRID_CLI;
  return env ? env.split(" ").filter(Boolean) : ["topogrid"];
}

export interface RunResult {
  exitCode: number;
  stdout: string;
}

export function runEngine(
  args: string[],
  files: Record<string, Uint8Array | string>,
  okCodes: number[] = [0],
): { result: RunResult; readFile: (name: string) => Uint8Array; cleanup: () => void } {
  const dir = mkdtempSync(join(tmpdir(), "topogrid-"));
  for (const [name, content] of Object.entries(files)) {
    writeFileSync(join(dir, name), content);
  }
  const [bin, ...pre] = command();
  // inputs were written into the temp dir, which is also the cwd, so the
  // argument list can name files bare
  const proc = spawnSync(bin, [...pre, ...args], {
    cwd: dir,
    encoding: "utf-8",
    maxBuffer: 256 * 1024 * 1024,
  });
  const cleanup = () => rmSync(dir, { recursive: true, force: true });
  if (proc.error) {
    cleanup();
    throw new EngineError(
      `failed to launch the topogrid CLI (${command().join(" ")}): ${proc.error.message}`,
    );
  }
  if (!okCodes.includes(proc.status ?? -1)) {
    const err = proc.stderr?.trim() ?? "";
    cleanup();
    throw new EngineError(`topogrid exited with code ${proc.status}: ${err}`);
  }
  return {
    result: { exitCode: proc.status ?? 0, stdout: proc.stdout },
    readFile: (name: string) => new Uint8Array(readFileSync(join(dir, name))),
    cleanup,
  };
}
