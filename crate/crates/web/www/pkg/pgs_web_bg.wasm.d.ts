/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_maskresult_free: (a: number, b: number) => void;
export const __wbg_sample_free: (a: number, b: number) => void;
export const edgeMap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const maskImage: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number];
export const maskresult_overlay: (a: number) => [number, number];
export const maskresult_stats: (a: number) => [number, number];
export const sample_caption: (a: number) => [number, number];
export const sample_rgba: (a: number) => [number, number];
export const sinkhornTrace: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const syntheticSample: (a: number, b: number, c: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
