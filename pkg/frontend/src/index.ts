/**
 * TypeScript client for the arrowqp solver.
 *
 * The solver runs as a separate process; this client drives it purely
 * through its public surface: the `arrowqp` command-line interface and its
 * JSON problem/result file formats. Nothing here re-implements numerics.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

/** Sparse matrix in zero-based triplet form. */
export interface SparseMatrix {
  readonly rows: number;
  readonly cols: number;
  readonly nnz: number;
  readonly triplets: ReadonlyArray<readonly [number, number, number]>;
}

/** A flat QP in the solver's problem-file schema. */
export interface ProblemData {
  n: number;
  p: number;
  m: number;
  P: SparseMatrix;
  c: number[];
  A: SparseMatrix;
  b: number[];
  G: SparseMatrix;
  h: number[];
  multistage?: unknown;
  meta?: Record<string, unknown>;
}

export type SolveStatus =
  | "solved"
  | "max_iter"
  | "primal_infeasible_suspect"
  | "dual_infeasible_suspect"
  | "numerical_error";

export interface SolveResult {
  status: SolveStatus;
  iterations: number;
  objective: number;
  primalRes: number;
  dualRes: number;
  x: number[];
  s: number[];
  y: number[];
  z: number[];
}

export interface StructureReport {
  blockSizes: number[];
  arrowWidth: number;
  factorizationFlops: number;
}

export interface SolverSettings {
  /** Linear-algebra backend: structured block factorization or the dense reference. */
  backend?: "btda" | "dense";
  /** Absolute and relative tolerance (the CLI uses one knob for both). */
  tol?: number;
  maxIter?: number;
}

/** The problem file (or inline data) could not be parsed or validated. */
export class ParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ParseError";
  }
}

/** The solver stopped without reaching the requested tolerances. */
export class NonConvergenceError extends Error {
  readonly status: SolveStatus;
  readonly result?: SolveResult;
  constructor(status: SolveStatus, result?: SolveResult) {
    super(`solver stopped with status ${status}`);
    this.name = "NonConvergenceError";
    this.status = status;
    this.result = result;
  }
}

/** An update changed a matrix sparsity pattern or a vector length. */
export class PatternChangedError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PatternChangedError";
  }
}

/** The solver process failed in an unexpected way. */
export class InternalError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "InternalError";
  }
}

export interface UpdateValues {
  P?: SparseMatrix;
  c?: number[];
  A?: SparseMatrix;
  b?: number[];
  G?: SparseMatrix;
  h?: number[];
}

const CLI = process.env.ARROWQP_CLI ?? "arrowqp";

function runCli(args: string[]): { code: number; stdout: string; stderr: string } {
  const proc = spawnSync(CLI, args, { encoding: "utf8" });
  if (proc.error) {
    throw new InternalError(`cannot run ${CLI}: ${proc.error.message}`);
  }
  return { code: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

function throwForExit(code: number, stderr: string): never {
  if (code === 2) throw new ParseError(stderr.trim());
  if (code === 4) throw new InternalError(stderr.trim());
  throw new InternalError(`unexpected exit code ${code}: ${stderr.trim()}`);
}

function parseResult(doc: Record<string, unknown>): SolveResult {
  return {
    status: doc.status as SolveStatus,
    iterations: doc.iterations as number,
    objective: doc.objective as number,
    primalRes: doc.primal_res as number,
    dualRes: doc.dual_res as number,
    x: doc.x as number[],
    s: doc.s as number[],
    y: doc.y as number[],
    z: doc.z as number[],
  };
}

function tripletKeys(mat: SparseMatrix): string {
  return mat.triplets
    .map(([i, j]) => `${i},${j}`)
    .sort()
    .join(";");
}

function checkSamePattern(name: string, next: SparseMatrix, prev: SparseMatrix): void {
  if (next.rows !== prev.rows || next.cols !== prev.cols) {
    throw new PatternChangedError(`${name}: shape changed`);
  }
  if (tripletKeys(next) !== tripletKeys(prev)) {
    throw new PatternChangedError(`${name}: sparsity pattern changed`);
  }
}

/** Read a problem file in the solver's JSON schema. */
export function loadProblem(file: string): ProblemData {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf8");
  } catch (err) {
    throw new ParseError(`cannot read ${file}: ${(err as Error).message}`);
  }
  let doc: ProblemData;
  try {
    doc = JSON.parse(text) as ProblemData;
  } catch (err) {
    throw new ParseError(`cannot parse ${file}: ${(err as Error).message}`);
  }
  for (const key of ["n", "p", "m", "P", "c", "A", "b", "G", "h"]) {
    if (!(key in doc)) throw new ParseError(`problem is missing field ${key}`);
  }
  return doc;
}

export interface GenerateParams {
  M?: number;
  N?: number;
  scenarios?: number;
  rd?: number;
  nx?: number;
  nu?: number;
  ng?: number;
  seed?: number;
}

/** Build a deterministic benchmark instance through the CLI generator. */
export function generate(
  family: "spring-mass" | "scenario" | "lqc",
  params: GenerateParams = {},
): ProblemData {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "arrowqp-gen-"));
  const file = path.join(dir, "problem.json");
  const args = ["generate", family, "-o", file];
  if (params.M !== undefined) args.push("-M", String(params.M));
  if (params.N !== undefined) args.push("-N", String(params.N));
  if (params.scenarios !== undefined) args.push("--scenarios", String(params.scenarios));
  if (params.rd !== undefined) args.push("--rd", String(params.rd));
  if (params.nx !== undefined) args.push("--nx", String(params.nx));
  if (params.nu !== undefined) args.push("--nu", String(params.nu));
  if (params.ng !== undefined) args.push("--ng", String(params.ng));
  if (params.seed !== undefined) args.push("--seed", String(params.seed));
  try {
    const { code, stderr } = runCli(args);
    if (code !== 0) throwForExit(code, stderr);
    return loadProblem(file);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * One solver session bound to a problem.
 *
 * Each solve round-trips through the CLI with files in a private scratch
 * directory. Results are numerically identical to invoking the CLI by
 * hand on the same data. Handles are single-threaded; create one per
 * concurrent session. `close()` removes the scratch directory; the handle
 * is unusable afterwards.
 */
export class BoundSolver {
  private problem: ProblemData;
  private readonly settings: SolverSettings;
  private readonly dir: string;
  private priorResultFile: string | null = null;
  private closed = false;
  private solveCount = 0;

  constructor(problem: ProblemData | string, settings: SolverSettings = {}) {
    this.problem = typeof problem === "string" ? loadProblem(problem) : problem;
    this.settings = settings;
    this.dir = fs.mkdtempSync(path.join(os.tmpdir(), "arrowqp-"));
  }

  private ensureOpen(): void {
    if (this.closed) throw new InternalError("solver handle is closed");
  }

  private writeProblem(): string {
    const file = path.join(this.dir, "problem.json");
    fs.writeFileSync(file, JSON.stringify(this.problem));
    return file;
  }

  /** Solve the bound problem; warm starts from the previous solve by default. */
  solve(options: { warmStart?: boolean } = {}): SolveResult {
    this.ensureOpen();
    const warm = options.warmStart ?? true;
    const problemFile = this.writeProblem();
    const resultFile = path.join(this.dir, `result-${this.solveCount++}.json`);
    const args = ["solve", problemFile, "-o", resultFile];
    if (this.settings.backend) args.push("--backend", this.settings.backend);
    if (this.settings.tol !== undefined) args.push("--tol", String(this.settings.tol));
    if (this.settings.maxIter !== undefined) {
      args.push("--max-iter", String(this.settings.maxIter));
    }
    if (warm && this.priorResultFile !== null) {
      args.push("--warm-start", this.priorResultFile);
    }
    const { code, stderr } = runCli(args);
    if (code !== 0 && code !== 3) throwForExit(code, stderr);
    let result: SolveResult;
    try {
      result = parseResult(JSON.parse(fs.readFileSync(resultFile, "utf8")));
    } catch (err) {
      throw new InternalError(`missing result file: ${(err as Error).message}`);
    }
    if (code === 3) throw new NonConvergenceError(result.status, result);
    this.priorResultFile = resultFile;
    return result;
  }

  /** Replace numerical values; the sparsity patterns must be unchanged. */
  update(values: UpdateValues): void {
    this.ensureOpen();
    const next: ProblemData = { ...this.problem };
    for (const name of ["P", "A", "G"] as const) {
      const mat = values[name];
      if (mat !== undefined) {
        checkSamePattern(name, mat, this.problem[name]);
        next[name] = mat;
      }
    }
    for (const name of ["c", "b", "h"] as const) {
      const vec = values[name];
      if (vec !== undefined) {
        if (vec.length !== this.problem[name].length) {
          throw new PatternChangedError(`${name}: length changed`);
        }
        next[name] = vec;
      }
    }
    this.problem = next;
  }

  /** Report the block structure the solver detects for this problem. */
  detect(): StructureReport {
    this.ensureOpen();
    const problemFile = this.writeProblem();
    const { code, stdout, stderr } = runCli([
      "detect", problemFile, "--format", "json",
    ]);
    if (code !== 0) throwForExit(code, stderr);
    const doc = JSON.parse(stdout) as Record<string, unknown>;
    return {
      blockSizes: doc.block_sizes as number[],
      arrowWidth: doc.arrow_width as number,
      factorizationFlops: doc.factorization_flops as number,
    };
  }

  /** Release the scratch directory; the handle becomes unusable. */
  close(): void {
    if (!this.closed) {
      fs.rmSync(this.dir, { recursive: true, force: true });
      this.closed = true;
    }
  }
}

/** Version of this client package. */
export const VERSION = "0.1.0";
