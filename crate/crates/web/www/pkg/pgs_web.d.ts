/* tslint:disable */
/* eslint-disable */

export class MaskResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA pixels of the overlay.
     */
    readonly overlay: Uint8Array;
    readonly stats: string;
}

export class Sample {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly caption: string;
    readonly rgba: Uint8Array;
}

export function edgeMap(rgba: Uint8Array, width: number, height: number, detector: string): Uint8Array;

export function maskImage(rgba: Uint8Array, width: number, height: number, patch_size: number, fixed: boolean, edge: string, otn: boolean, epoch: number, seed: number): MaskResult;

/**
 * `epsilon <= 0` selects the shift kernel.
 */
export function sinkhornTrace(rgba: Uint8Array, width: number, height: number, patch_size: number, epoch: number, seed: number, epsilon: number, max_iters: number): string;

export function syntheticSample(seed: number, index: number, size: number): Sample;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_maskresult_free: (a: number, b: number) => void;
    readonly __wbg_sample_free: (a: number, b: number) => void;
    readonly edgeMap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly maskImage: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number];
    readonly maskresult_overlay: (a: number) => [number, number];
    readonly maskresult_stats: (a: number) => [number, number];
    readonly sample_caption: (a: number) => [number, number];
    readonly sample_rgba: (a: number) => [number, number];
    readonly sinkhornTrace: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly syntheticSample: (a: number, b: number, c: number) => number;
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
