/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_runview_free: (a: number, b: number) => void;
export const demo_check: (a: number) => [number, number];
export const demo_delta: (a: number) => number;
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_path: (a: number) => [number, number];
export const demo_reference_scene: () => [number, number];
export const demo_simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const demo_start_point: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_winding_loop: (a: number, b: number, c: number, d: number) => [number, number, number];
export const runview_delta_theta: (a: number) => number;
export const runview_h: (a: number) => [number, number];
export const runview_points: (a: number) => [number, number];
export const runview_s: (a: number) => [number, number];
export const runview_termination: (a: number) => [number, number];
export const runview_theta: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
