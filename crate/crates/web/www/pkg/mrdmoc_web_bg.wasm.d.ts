/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curves_free: (a: number, b: number) => void;
export const curves_column: (a: number, b: number) => [number, number];
export const curves_count: (a: number) => number;
export const curves_name: (a: number, b: number) => [number, number];
export const curves_summary: (a: number) => [number, number];
export const curves_time: (a: number) => [number, number];
export const freeVibration: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const frequencies: (a: number) => [number, number, number, number];
export const slew: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
