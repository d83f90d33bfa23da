/* tslint:disable */
/* eslint-disable */

/**
 * Named curves sharing one time axis, plus a short text summary.
 */
export class Curves {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    column(i: number): Float64Array;
    count(): number;
    name(i: number): string;
    summary(): string;
    time(): Float64Array;
}

export function freeVibration(eta1: number, tf: number, dt: number, p: number, split: number): Curves;

export function frequencies(num_modes: number): Float64Array;

export function slew(theta_deg: number, tf: number, dt: number, p: number, split: number): Curves;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curves_free: (a: number, b: number) => void;
    readonly curves_column: (a: number, b: number) => [number, number];
    readonly curves_count: (a: number) => number;
    readonly curves_name: (a: number, b: number) => [number, number];
    readonly curves_summary: (a: number) => [number, number];
    readonly curves_time: (a: number) => [number, number];
    readonly freeVibration: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly frequencies: (a: number) => [number, number, number, number];
    readonly slew: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
