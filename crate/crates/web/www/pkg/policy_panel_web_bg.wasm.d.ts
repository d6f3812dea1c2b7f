/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const arco_path: (a: number, b: number) => [number, number, number, number];
export const partition: (a: number) => [number, number, number, number];
export const staggered_bias: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
