/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_filldemo_free: (a: number, b: number) => void;
export const builtin_angles: (a: number, b: number) => [number, number];
export const filldemo_fill: (a: number, b: number, c: number) => [number, number, number, number];
export const filldemo_height: (a: number) => number;
export const filldemo_new: (a: number, b: number, c: number) => [number, number, number];
export const filldemo_slice_rgba: (a: number, b: number) => [number, number];
export const filldemo_slices: (a: number) => number;
export const filldemo_suggested_slice: (a: number) => number;
export const filldemo_width: (a: number) => number;
export const planted_search: (a: bigint, b: number, c: number) => [number, number, number, number];
export const score_builtin: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
