/* tslint:disable */
/* eslint-disable */

export class DeskDemo {
    free(): void;
    [Symbol.dispose](): void;
    advance(ms: number): string;
    constructor();
    /**
     * Returns the trace lines the observation produced, newline-separated.
     */
    observe(kind: string, value: string): string;
    /**
     * JSON text of the retained state and timer.
     */
    snapshot(): string;
}

export function topicMatches(filter: string, topic: string): boolean;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_deskdemo_free: (a: number, b: number) => void;
    readonly deskdemo_advance: (a: number, b: number) => [number, number];
    readonly deskdemo_new: () => number;
    readonly deskdemo_observe: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly deskdemo_snapshot: (a: number) => [number, number];
    readonly topicMatches: (a: number, b: number, c: number, d: number) => [number, number, number];
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
