/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Assumption checks as JSON.
     */
    check(): string;
    delta(): number;
    /**
     * Loads a scene from its JSON text.
     */
    constructor(scene_json: string);
    /**
     * Flattened path nodes.
     */
    path(): Float64Array;
    /**
     * The built-in reference scene as JSON text.
     */
    static reference_scene(): string;
    /**
     * Guiding-field trajectory from `(x1, x2, x3)` with the convergence weight scaled.
     */
    simulate(x1: number, x2: number, x3: number, max_time: number, b_scale: number): RunView;
    /**
     * Tube point at path angle `theta` with base offset `(f, g)`.
     */
    start_point(theta: number, f: number, g: number): Float64Array;
    /**
     * One base revolution of the winding part alone.
     */
    winding_loop(x1: number, x2: number, x3: number): RunView;
}

export class RunView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly delta_theta: number;
    readonly h: Float64Array;
    /**
     * Flattened `x1, x2, x3` per drawn sample.
     */
    readonly points: Float64Array;
    readonly s: Float64Array;
    readonly termination: string;
    /**
     * Unwrapped projected angle; NaN where it was not computed.
     */
    readonly theta: Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_runview_free: (a: number, b: number) => void;
    readonly demo_check: (a: number) => [number, number];
    readonly demo_delta: (a: number) => number;
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_path: (a: number) => [number, number];
    readonly demo_reference_scene: () => [number, number];
    readonly demo_simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_start_point: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_winding_loop: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly runview_delta_theta: (a: number) => number;
    readonly runview_h: (a: number) => [number, number];
    readonly runview_points: (a: number) => [number, number];
    readonly runview_s: (a: number) => [number, number];
    readonly runview_termination: (a: number) => [number, number];
    readonly runview_theta: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
