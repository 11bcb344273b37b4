/* tslint:disable */
/* eslint-disable */

/**
 * JSON `RotationView` for one EST layer sampled on the given grid.
 */
export function rotationError(kind: string, points: number, optimize: boolean, rotations: number, seed: number): string;

/**
 * JSON `GridView` for a grid of the given family.
 */
export function sampleGrid(kind: string, points: number, optimize: boolean): string;

/**
 * JSON `SignalView` for harmonic coefficients evaluated on a Fibonacci or lat-long grid.
 */
export function sphericalSignal(kind: string, points: number, coeffs: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly rotationError: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly sampleGrid: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly sphericalSignal: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
