/**
 * Node client for the topogrid constraint engine.
 *
 * Two entry points, mirroring what a training loop needs in-process:
 * `detectCritical` turns a label buffer into the binary mask of
 * constraint-violating sites, and `lossTi` evaluates the masked interaction
 * loss with its gradient with respect to the likelihood buffer. Both shuttle
 * data through the engine's SEGV container and CLI, so results are exactly
 * what the command line produces. Caller buffers are copied on entry and
 * never retained.
 */

import { EngineError, runEngine } from "./cli.js";
import {
  decodeLikelihood,
  decodeMask,
  encodeLabels,
  encodeLikelihood,
  siteCount,
} from "./segv.js";

export { EngineError } from "./cli.js";
export { SegvError } from "./segv.js";

/** Contiguous row-major label buffer: one u8 class id per site. */
export interface LabelView {
  data: Uint8Array;
  dims: number[];
  numClasses: number;
  spacing?: number[];
}

/** Contiguous class-major likelihood buffer: f32 per (class, site). */
export interface LikelihoodView {
  data: Float32Array;
  dims: number[];
  numClasses: number;
}

export interface DetectResult {
  /** One u8 (0/1) per site: 1 marks a constraint-violating site. */
  mask: Uint8Array;
  violations: number;
  foreground: number;
  violationsPercent: number;
}

export type Surrogate = "CE" | "MSE" | "DICE";

export interface LossTiResult {
  lossTi: number;
  /** d(lossTi)/d(likelihood), same layout as the input buffer. */
  grad: Float32Array;
}

/**
 * Critical-site mask of a label grid under a constraint config.
 *
 * `constraintConfig` is the engine's text format (`classes`, `contain`,
 * `exclude`, `conn` directives). `conn` overrides the config's connectivity.
 */
export function detectCritical(
  labels: LabelView,
  constraintConfig: string,
  conn?: "4" | "8" | "6" | "26" | "box",
): DetectResult {
  const payload = encodeLabels(labels.data, labels.dims, labels.numClasses, labels.spacing);
  const args = ["check", "labels.segv", "rules.cfg", "--out", "mask.segv", "--json"];
  if (conn) args.push("--conn", conn);
  const { result, readFile, cleanup } = runEngine(
    args,
    { "labels.segv": payload, "rules.cfg": constraintConfig },
    [0, 3], // 3 means "violations found", which is a result, not a failure
  );
  try {
    const report = JSON.parse(result.stdout) as {
      violations: number;
      foreground: number;
      violations_percent: number;
    };
    const mask = decodeMask(readFile("mask.segv"));
    if (siteCount(mask.dims) !== siteCount(labels.dims)) {
      throw new EngineError("engine returned a mask of unexpected shape");
    }
    return {
      mask: mask.bits,
      violations: report.violations,
      foreground: report.foreground,
      violationsPercent: report.violations_percent,
    };
  } finally {
    cleanup();
  }
}

/**
 * Masked interaction loss and its gradient for a likelihood map against a
 * ground-truth label grid. CE expects the likelihood normalized per site.
 */
export function lossTi(
  likelihood: LikelihoodView,
  groundTruth: LabelView,
  constraintConfig: string,
  surrogate: Surrogate = "CE",
): LossTiResult {
  if (likelihood.dims.join(",") !== groundTruth.dims.join(",")) {
    throw new EngineError(
      `likelihood dims ${likelihood.dims.join("x")} do not match ` +
      `ground-truth dims ${groundTruth.dims.join("x")}`,
    );
  }
  const fBytes = encodeLikelihood(likelihood.data, likelihood.dims, likelihood.numClasses);
  const gBytes = encodeLabels(groundTruth.data, groundTruth.dims, groundTruth.numClasses);
  const { result, readFile, cleanup } = runEngine(
    ["loss", "pred.segv", "gt.segv", "rules.cfg", "--ti-only",
     "--surrogate", surrogate, "--grad", "grad.segv"],
    { "pred.segv": fBytes, "gt.segv": gBytes, "rules.cfg": constraintConfig },
  );
  try {
    const report = JSON.parse(result.stdout) as { l_ti: number };
    const grad = decodeLikelihood(readFile("grad.segv"));
    return { lossTi: report.l_ti, grad: grad.values };
  } finally {
    cleanup();
  }
}
