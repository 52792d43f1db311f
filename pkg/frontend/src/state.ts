/**
 * Pure per-frame annotation state. All transitions return new objects so the
 * view layer can re-render from snapshots; nothing here touches the DOM or
 * the network.
 */

import type { LabelsResponse } from "./api.js";

export interface Acknowledged {
  /** Sorted segment ids the server last confirmed. */
  selected: number[];
  timestamp: string | null;
}

export interface SessionState {
  frameId: string;
  /** Segment ids currently marked traversable. */
  selected: ReadonlySet<number>;
  /** Previous selections, most recent last; capped at UNDO_DEPTH. */
  undoStack: ReadonlyArray<ReadonlySet<number>>;
  /** True iff `selected` differs from the last server acknowledgment. */
  dirty: boolean;
  lastAck: Acknowledged;
}

export const UNDO_DEPTH = 256;

export function setsEqual(a: ReadonlySet<number>, b: ReadonlySet<number>): boolean {
  if (a.size !== b.size) return false;
  for (const id of a) if (!b.has(id)) return false;
  return true;
}

/** Sorted-array form used for POST bodies and ack comparisons. */
export function sortedIds(selected: ReadonlySet<number>): number[] {
  return [...selected].sort((p, q) => p - q);
}

/** Initial state mirroring what the server currently holds for the frame. */
export function fromServer(labels: LabelsResponse): SessionState {
  const selected = new Set(labels.selected);
  return {
    frameId: labels.frame_id,
    selected,
    undoStack: [],
    dirty: false,
    lastAck: { selected: sortedIds(selected), timestamp: labels.timestamp },
  };
}

function withSelection(
  state: SessionState,
  selected: ReadonlySet<number>,
  undoStack: ReadonlyArray<ReadonlySet<number>>,
): SessionState {
  return {
    ...state,
    selected,
    undoStack,
    dirty: !setsEqual(selected, new Set(state.lastAck.selected)),
  };
}

/** Flip one segment's membership; the prior selection is pushed for undo. */
export function toggle(state: SessionState, segmentId: number): SessionState {
  const selected = new Set(state.selected);
  if (selected.has(segmentId)) selected.delete(segmentId);
  else selected.add(segmentId);
  const undoStack = [...state.undoStack, state.selected].slice(-UNDO_DEPTH);
  return withSelection(state, selected, undoStack);
}

/** Restore the exact previous selection; no-op when nothing to undo. */
export function undo(state: SessionState): SessionState {
  if (state.undoStack.length === 0) return state;
  const previous = state.undoStack[state.undoStack.length - 1]!;
  return withSelection(state, previous, state.undoStack.slice(0, -1));
}

/**
 * Fold a successful save response back in. The server echoes the canonical
 * (sorted, deduplicated) set, which becomes the new acknowledgment; the
 * local selection is replaced by it so UI state equals a GET round-trip.
 */
export function markSaved(state: SessionState, response: LabelsResponse): SessionState {
  return {
    ...state,
    selected: new Set(response.selected),
    dirty: false,
    lastAck: { selected: [...response.selected], timestamp: response.timestamp },
  };
}

/**
 * True when the server-side labels changed behind our back (another writer
 * won since we last synchronized) — shown as a stale-state warning.
 */
export function isStale(state: SessionState, serverTimestamp: string | null): boolean {
  return serverTimestamp !== state.lastAck.timestamp;
}
