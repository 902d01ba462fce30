/* tslint:disable */
/* eslint-disable */

/**
 * Generated single bifurcation, optionally holed, kept between fills so
 * the page can rerun with different settings.
 */
export class FillDemo {
    free(): void;
    [Symbol.dispose](): void;
    fill(hole_size: number, shield: boolean): string;
    height(): number;
    /**
     * A negative radius means no pinhole.
     */
    constructor(angle1: number, angle2: number, pinhole_radius: number);
    slice_rgba(z: number): Uint8Array;
    /**
     * Number of coronal slices.
     */
    slices(): number;
    /**
     * The pinhole's slice, or the middle one.
     */
    suggested_slice(): number;
    width(): number;
}

/**
 * Angle codes a built-in model expects, comma separated.
 */
export function builtin_angles(model: string): string;

export function planted_search(seed: bigint, gap_sd: number, max_size: number): string;

export function score_builtin(model: string, values: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_filldemo_free: (a: number, b: number) => void;
    readonly builtin_angles: (a: number, b: number) => [number, number];
    readonly filldemo_fill: (a: number, b: number, c: number) => [number, number, number, number];
    readonly filldemo_height: (a: number) => number;
    readonly filldemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly filldemo_slice_rgba: (a: number, b: number) => [number, number];
    readonly filldemo_slices: (a: number) => number;
    readonly filldemo_suggested_slice: (a: number) => number;
    readonly filldemo_width: (a: number) => number;
    readonly planted_search: (a: bigint, b: number, c: number) => [number, number, number, number];
    readonly score_builtin: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
