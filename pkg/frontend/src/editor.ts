/**
 * Superpixel editor view: the frame image under an SVG overlay with one path
 * per segment. Clicks are hit-tested against the decoded label grid
 * client-side, so toggling never waits on the server; Save posts the whole
 * selection and folds the acknowledgment back into local state.
 */

import { ApiClient, ApiError, FrameInfo, SuperpixelsResponse } from "./api.js";
import { decodeRle, segmentAt } from "./rle.js";
import {
  SessionState,
  fromServer,
  isStale,
  markSaved,
  sortedIds,
  toggle,
  undo,
} from "./state.js";

export interface Progress {
  annotated: number;
  total: number;
}

export interface EditorOptions {
  annotator?: string;
  /** Called with -1 / +1 when the annotator presses ArrowLeft / ArrowRight. */
  onNavigate?: (delta: number) => void;
}

export interface EditorHandle {
  readonly frameId: string;
  state(): SessionState;
  /** Toggle the segment under pixel (x, y); no-op outside the image. */
  clickAt(x: number, y: number): void;
  toggleSegment(segmentId: number): void;
  undo(): void;
  save(): Promise<void>;
  dispose(): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function polylinesToPath(polylines: [number, number][][]): string {
  const parts: string[] = [];
  for (const poly of polylines) {
    if (poly.length === 0) continue;
    const [x0, y0] = poly[0]!;
    let d = `M${x0},${y0}`;
    for (let i = 1; i < poly.length; i++) {
      const [x, y] = poly[i]!;
      d += ` L${x},${y}`;
    }
    parts.push(d + " Z");
  }
  return parts.join(" ");
}

function isEditableTarget(target: EventTarget | null): boolean {
  // Duck-typed rather than instanceof: the event may originate from another
  // realm (e.g. a jsdom window), whose HTMLElement is a different class.
  const el = target as Partial<HTMLElement> | null;
  if (!el || typeof el.tagName !== "string") return false;
  if (el.isContentEditable) return true;
  return el.tagName === "INPUT" || el.tagName === "TEXTAREA" || el.tagName === "SELECT";
}

export function formatLux(lux: number): string {
  return lux >= 1000 ? `${(lux / 1000).toFixed(1)}k lx` : `${lux.toFixed(0)} lx`;
}

export async function mountEditor(
  container: HTMLElement,
  api: ApiClient,
  frame: FrameInfo,
  progress: Progress,
  options: EditorOptions = {},
): Promise<EditorHandle> {
  const doc = container.ownerDocument;
  const superpixels: SuperpixelsResponse = await api.superpixels(frame.id);
  const grid = decodeRle(superpixels.rle);
  let state: SessionState = fromServer(await api.labels(frame.id));
  let saving = false;
  let annotated = frame.annotated;

  container.innerHTML = "";
  const root = doc.createElement("div");
  root.className = "editor";
  root.innerHTML = `
    <header class="editor-header">
      <span class="frame-id"></span>
      <span class="lux-badge"></span>
      <span class="progress"></span>
      <span class="selected-count"></span>
      <span class="dirty-flag" hidden>unsaved</span>
      <button type="button" class="save-button">Save</button>
      <span class="hint">click: toggle &middot; S: save &middot; U: undo &middot; &larr;/&rarr;: frames</span>
    </header>
    <div class="banner banner-warn" hidden></div>
    <div class="banner banner-error" hidden></div>
    <div class="editor-stage"></div>
  `;
  container.appendChild(root);

  const q = <T extends Element>(sel: string) => root.querySelector(sel) as T;
  const frameIdEl = q<HTMLSpanElement>(".frame-id");
  const luxEl = q<HTMLSpanElement>(".lux-badge");
  const progressEl = q<HTMLSpanElement>(".progress");
  const countEl = q<HTMLSpanElement>(".selected-count");
  const dirtyEl = q<HTMLSpanElement>(".dirty-flag");
  const saveButton = q<HTMLButtonElement>(".save-button");
  const warnBanner = q<HTMLDivElement>(".banner-warn");
  const errorBanner = q<HTMLDivElement>(".banner-error");
  const stage = q<HTMLDivElement>(".editor-stage");

  frameIdEl.textContent = frame.id;
  luxEl.textContent = formatLux(frame.lux);

  const image = doc.createElement("img");
  image.className = "frame-image";
  image.src = api.base + frame.image_url;
  image.alt = `frame ${frame.id}`;
  image.draggable = false;
  stage.appendChild(image);

  const { height, width } = superpixels.rle;
  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "overlay");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("preserveAspectRatio", "none");
  stage.appendChild(svg);

  const segmentPaths = new Map<number, SVGPathElement>();
  for (const [key, polylines] of Object.entries(superpixels.boundaries)) {
    const segmentId = Number(key);
    const path = doc.createElementNS(SVG_NS, "path");
    path.setAttribute("class", "seg");
    path.setAttribute("d", polylinesToPath(polylines));
    path.setAttribute("fill-rule", "evenodd");
    path.dataset.segId = key;
    svg.appendChild(path);
    segmentPaths.set(segmentId, path);
  }

  function render(): void {
    progressEl.textContent = `${progress.annotated}/${progress.total} annotated`;
    countEl.textContent = `${state.selected.size} selected`;
    dirtyEl.hidden = !state.dirty;
    saveButton.disabled = saving || !state.dirty;
    for (const [segmentId, path] of segmentPaths) {
      path.classList.toggle("selected", state.selected.has(segmentId));
    }
  }

  function showError(message: string): void {
    errorBanner.hidden = false;
    errorBanner.textContent = "";
    errorBanner.append(`${message} `);
    const retry = doc.createElement("button");
    retry.type = "button";
    retry.className = "retry-button";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void save());
    errorBanner.appendChild(retry);
  }

  function clickAt(x: number, y: number): void {
    const segmentId = segmentAt(grid, superpixels.rle, x, y);
    if (segmentId === null) return;
    toggleSegment(segmentId);
  }

  function toggleSegment(segmentId: number): void {
    state = toggle(state, segmentId);
    render();
  }

  function doUndo(): void {
    state = undo(state);
    render();
  }

  async function save(): Promise<void> {
    if (saving) return;
    saving = true;
    render();
    try {
      const current = await api.labels(frame.id);
      // Keep the warning up after overwriting a concurrent writer; it clears
      // on the next save that found the server in sync.
      const stale = isStale(state, current.timestamp);
      warnBanner.hidden = !stale;
      if (stale) {
        warnBanner.textContent =
          "Labels changed on the server since this frame was loaded; saving overwrites them.";
      }
      const response = await api.saveLabels(
        frame.id,
        sortedIds(state.selected),
        options.annotator,
      );
      state = markSaved(state, response);
      errorBanner.hidden = true;
      if (!annotated) {
        annotated = true;
        progress.annotated += 1;
      }
    } catch (err) {
      const detail = err instanceof ApiError ? err.message : String(err);
      showError(`Save failed: ${detail}.`);
    } finally {
      saving = false;
      render();
    }
  }

  svg.addEventListener("click", (event: MouseEvent) => {
    const rect = svg.getBoundingClientRect();
    if (rect.width <= 0 || rect.height <= 0) return;
    const x = ((event.clientX - rect.left) * width) / rect.width;
    const y = ((event.clientY - rect.top) * height) / rect.height;
    clickAt(x, y);
  });

  function onKeyDown(event: KeyboardEvent): void {
    if (isEditableTarget(event.target)) return;
    if (event.key === "ArrowLeft") {
      options.onNavigate?.(-1);
    } else if (event.key === "ArrowRight") {
      options.onNavigate?.(1);
    } else if (event.key === "s" || event.key === "S") {
      void save();
    } else if (event.key === "u" || event.key === "U") {
      doUndo();
    } else {
      return;
    }
    event.preventDefault();
  }
  doc.addEventListener("keydown", onKeyDown);

  saveButton.addEventListener("click", () => void save());
  render();

  return {
    frameId: frame.id,
    state: () => state,
    clickAt,
    toggleSegment,
    undo: doUndo,
    save,
    dispose(): void {
      doc.removeEventListener("keydown", onKeyDown);
      container.innerHTML = "";
    },
  };
}
