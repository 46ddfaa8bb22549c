// Pure state for the edit workbench: slider clamping, request building,
// response bookkeeping. Views render from this and never compute metrics.

import type { Catalog, EditRequestBody, EditResponse, Mode } from './api.js';

export interface WorkbenchState {
  target: number | null;
  reference: number | null;
  partId: string | null;
  mode: Mode;
  lambda: number;
  epsilon: number;
  epsilonMax: number;
  pending: boolean;
  error: string | null;
  last: EditResponse | null;
}

export interface PartOption {
  id: string;
  label: string;
}

// Epsilon beyond the widest layer's channel count cannot spend more budget:
// each channel costs at most 1.
export function epsilonMaxFromCatalog(catalog: Catalog): number {
  const widths = Object.values(catalog.channels ?? {});
  return widths.length ? Math.max(...widths) : 64;
}

export function initialWorkbench(catalog: Catalog): WorkbenchState {
  return {
    target: null,
    reference: null,
    partId: null,
    mode: 'sequential',
    lambda: 0.5,
    epsilon: 0,
    epsilonMax: epsilonMaxFromCatalog(catalog),
    pending: false,
    error: null,
    last: null,
  };
}

// Explicit parts first, then every unassigned cluster as its own option.
export function partOptions(catalog: Catalog): PartOption[] {
  const options: PartOption[] = catalog.parts.map((p) => ({
    id: p.part_id,
    label: p.label || p.part_id,
  }));
  for (const cluster of catalog.clusters) {
    if (cluster.merged_into === null) {
      options.push({
        id: `cluster-${cluster.id}-part`,
        label: cluster.label
          ? `${cluster.label} (cluster ${cluster.id})`
          : `cluster ${cluster.id}`,
      });
    }
  }
  return options;
}

export function clampLambda(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

export function clampEpsilon(value: number, max: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(max, Math.max(0, value));
}

export function setLambda(state: WorkbenchState, raw: number): WorkbenchState {
  return { ...state, lambda: clampLambda(raw) };
}

export function setEpsilon(state: WorkbenchState, raw: number): WorkbenchState {
  return { ...state, epsilon: clampEpsilon(raw, state.epsilonMax) };
}

export function setMode(state: WorkbenchState, mode: Mode): WorkbenchState {
  return { ...state, mode };
}

export function buildEditBody(state: WorkbenchState): EditRequestBody | null {
  if (state.target === null || state.reference === null || state.partId === null) {
    return null;
  }
  const body: EditRequestBody = {
    target: state.target,
    reference: state.reference,
    part_id: state.partId,
    mode: state.mode,
  };
  if (state.mode === 'sequential') {
    body.epsilon = state.epsilon;
  } else {
    body.lambda = state.lambda;
  }
  return body;
}

// Failures keep the last good preview on screen.
export function applyResponse(state: WorkbenchState, resp: EditResponse): WorkbenchState {
  return { ...state, last: resp, pending: false, error: null };
}

export function applyError(state: WorkbenchState, message: string): WorkbenchState {
  return { ...state, pending: false, error: message };
}

export function supportTotal(resp: EditResponse): number {
  return Object.values(resp.q_summary).reduce((acc, s) => acc + s.support, 0);
}

export function supportPerLayerNondecreasing(
  prev: EditResponse,
  next: EditResponse,
): boolean {
  return Object.keys(prev.q_summary).every((layer) => {
    const before = prev.q_summary[layer];
    const after = next.q_summary[layer];
    return after !== undefined && before !== undefined && after.support >= before.support;
  });
}

export function formatMse(value: number | null): string {
  if (value === null) return 'n/a';
  return value.toFixed(4);
}

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
}

// Trailing-edge debounce; slider drags collapse into one request.
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let handle: ReturnType<typeof setTimeout> | null = null;
  const wrapped = (...args: A): void => {
    if (handle !== null) clearTimeout(handle);
    handle = setTimeout(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };
  wrapped.cancel = () => {
    if (handle !== null) clearTimeout(handle);
    handle = null;
  };
  return wrapped;
}

export const SLIDER_DEBOUNCE_MS = 250;
