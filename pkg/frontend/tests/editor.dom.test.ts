// @vitest-environment jsdom
import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, FrameInfo, LabelsResponse, SuperpixelsResponse } from "../src/api.js";
import { mountBrowser, progressText } from "../src/browser.js";
import { EditorHandle, mountEditor } from "../src/editor.js";
import { sortedIds } from "../src/state.js";

/**
 * 4x6 quadrant fixture:
 *   0 0 0 1 1 1
 *   0 0 0 1 1 1
 *   2 2 2 3 3 3
 *   2 2 2 3 3 3
 */
const QUADRANTS: SuperpixelsResponse = {
  n_segments: 4,
  params: { k: 4, m: 10.0, iterations: 4 },
  rle: {
    height: 4,
    width: 6,
    values: [0, 1, 0, 1, 2, 3, 2, 3],
    counts: [3, 3, 3, 3, 3, 3, 3, 3],
  },
  boundaries: {
    "0": [[[0, 0], [3, 0], [3, 2], [0, 2]]],
    "1": [[[3, 0], [6, 0], [6, 2], [3, 2]]],
    "2": [[[0, 2], [3, 2], [3, 4], [0, 4]]],
    "3": [[[3, 2], [6, 2], [6, 4], [3, 4]]],
  },
};

function frameInfo(id: string, lux = 500, annotated = false): FrameInfo {
  return { id, image_url: `/api/frames/${id}/image.png`, lux, annotated };
}

interface FakeService {
  fetchImpl: typeof fetch;
  labels: Map<string, LabelsResponse>;
  /** When set, the next POST /labels fails once with this status. */
  failNextPost: number | null;
  /** When set, every request rejects (service unreachable). */
  unreachable: boolean;
  postCount: number;
}

function jsonResponse(status: number, payload: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: `status ${status}`,
    json: async () => payload,
  } as unknown as Response;
}

function makeService(frames: FrameInfo[]): FakeService {
  const service: FakeService = {
    labels: new Map(),
    failNextPost: null,
    unreachable: false,
    postCount: 0,
    fetchImpl: undefined as unknown as typeof fetch,
  };
  let clock = 0;
  service.fetchImpl = (async (input: RequestInfo | URL, init?: RequestInit) => {
    if (service.unreachable) throw new TypeError("fetch failed");
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/api/frames") return jsonResponse(200, frames);
    const match = /^\/api\/frames\/([^/]+)\/(superpixels|labels)$/.exec(path);
    if (!match) return jsonResponse(404, { detail: `no route ${path}` });
    const [, frameId, endpoint] = match as unknown as [string, string, string];
    if (!frames.some((f) => f.id === frameId)) {
      return jsonResponse(404, { detail: `unknown frame '${frameId}'` });
    }
    if (endpoint === "superpixels") return jsonResponse(200, QUADRANTS);
    if (init?.method === "POST") {
      service.postCount++;
      if (service.failNextPost !== null) {
        const status = service.failNextPost;
        service.failNextPost = null;
        return jsonResponse(status, { detail: "injected failure" });
      }
      const body = JSON.parse(String(init.body)) as {
        selected: number[];
        annotator?: string;
      };
      const bad = body.selected.find((s) => s < 0 || s >= QUADRANTS.n_segments);
      if (bad !== undefined) {
        return jsonResponse(400, { detail: `unknown segment id ${bad}` });
      }
      const saved: LabelsResponse = {
        frame_id: frameId,
        selected: [...new Set(body.selected)].sort((a, b) => a - b),
        timestamp: `t${clock++}`,
        annotator: body.annotator ?? null,
      };
      service.labels.set(frameId, saved);
      return jsonResponse(200, saved);
    }
    return jsonResponse(
      200,
      service.labels.get(frameId) ?? {
        frame_id: frameId,
        selected: [],
        timestamp: null,
        annotator: null,
      },
    );
  }) as typeof fetch;
  return service;
}

/** Map pixel coordinates 1:1 so synthetic clicks hit predictable segments. */
function stubRect(svg: SVGSVGElement, width: number, height: number): void {
  svg.getBoundingClientRect = () =>
    ({ left: 0, top: 0, x: 0, y: 0, width, height, right: width, bottom: height,
       toJSON: () => ({}) }) as DOMRect;
}

function clickPixel(svg: SVGSVGElement, x: number, y: number): void {
  svg.dispatchEvent(
    new MouseEvent("click", { clientX: x, clientY: y, bubbles: true }),
  );
}

function pressKey(key: string): void {
  document.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

async function mountQuadrantEditor(
  service: FakeService,
  options: {
    frames?: FrameInfo[];
    index?: number;
    onNavigate?: (delta: number) => void;
    progress?: { annotated: number; total: number };
  } = {},
): Promise<{ handle: EditorHandle; svg: SVGSVGElement; container: HTMLElement }> {
  const frames = options.frames ?? [frameInfo("000001")];
  const api = new ApiClient("", service.fetchImpl);
  const container = document.createElement("div");
  document.body.appendChild(container);
  const handle = await mountEditor(
    container,
    api,
    frames[options.index ?? 0]!,
    options.progress ?? { annotated: 0, total: frames.length },
    { onNavigate: options.onNavigate },
  );
  const svg = container.querySelector("svg.overlay") as SVGSVGElement;
  stubRect(svg, QUADRANTS.rle.width, QUADRANTS.rle.height);
  return { handle, svg, container };
}

afterEach(() => {
  document.body.innerHTML = "";
});

describe("superpixel editor", () => {
  it("renders the image with one overlay path per segment", async () => {
    const { container, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    expect(container.querySelector("img.frame-image")).not.toBeNull();
    expect(container.querySelectorAll("path.seg")).toHaveLength(4);
    expect(handle.state().dirty).toBe(false);
    handle.dispose();
  });

  it("mirrors an existing server annotation on load", async () => {
    const service = makeService([frameInfo("000001")]);
    service.labels.set("000001", {
      frame_id: "000001",
      selected: [0, 3],
      timestamp: "t0",
      annotator: null,
    });
    const { container, handle } = await mountQuadrantEditor(service);
    expect(sortedIds(handle.state().selected)).toEqual([0, 3]);
    expect(
      container.querySelector('path[data-seg-id="0"]')!.classList.contains("selected"),
    ).toBe(true);
    expect(
      container.querySelector('path[data-seg-id="1"]')!.classList.contains("selected"),
    ).toBe(false);
    handle.dispose();
  });

  it("toggles the clicked segment with an immediate tint", async () => {
    const { svg, container, handle } = await mountQuadrantEditor(
      makeService([frameInfo("000001")]),
    );
    const path2 = container.querySelector('path[data-seg-id="2"]')!;
    clickPixel(svg, 1.5, 3.5); // (x=1, y=3) -> segment 2
    expect(sortedIds(handle.state().selected)).toEqual([2]);
    expect(path2.classList.contains("selected")).toBe(true);
    expect(handle.state().dirty).toBe(true);
    handle.dispose();
  });

  it("click twice on the same segment leaves the selection unchanged", async () => {
    const { svg, container, handle } = await mountQuadrantEditor(
      makeService([frameInfo("000001")]),
    );
    const path3 = container.querySelector('path[data-seg-id="3"]')!;
    clickPixel(svg, 4.5, 2.5);
    expect(path3.classList.contains("selected")).toBe(true);
    clickPixel(svg, 4.5, 2.5);
    expect(path3.classList.contains("selected")).toBe(false);
    expect(sortedIds(handle.state().selected)).toEqual([]);
    expect(handle.state().dirty).toBe(false);
    handle.dispose();
  });

  it("maps scaled display coordinates back to image pixels", async () => {
    const { svg, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    stubRect(svg, 600, 400); // 100x upscale
    clickPixel(svg, 350, 50); // image pixel (3.5, 0.5) -> segment 1
    expect(sortedIds(handle.state().selected)).toEqual([1]);
    handle.dispose();
  });

  it("ignores clicks outside the label grid", async () => {
    const { svg, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    handle.clickAt(-1, 0);
    handle.clickAt(0, 99);
    clickPixel(svg, 5.9, 3.9);
    clickPixel(svg, 5.9, 3.9);
    expect(sortedIds(handle.state().selected)).toEqual([]);
    handle.dispose();
  });

  it("U restores the exact previous selection", async () => {
    const { svg, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    clickPixel(svg, 0.5, 0.5); // segment 0
    clickPixel(svg, 4.5, 0.5); // segment 1
    clickPixel(svg, 0.5, 0.5); // segment 0 off again
    expect(sortedIds(handle.state().selected)).toEqual([1]);
    pressKey("u");
    expect(sortedIds(handle.state().selected)).toEqual([0, 1]);
    pressKey("U");
    expect(sortedIds(handle.state().selected)).toEqual([0]);
    pressKey("u");
    expect(sortedIds(handle.state().selected)).toEqual([]);
    pressKey("u"); // empty stack: no-op
    expect(sortedIds(handle.state().selected)).toEqual([]);
    handle.dispose();
  });

  it("S saves: posts sorted ids, adopts the acknowledgment, bumps progress", async () => {
    const service = makeService([frameInfo("000001"), frameInfo("000002")]);
    const progress = { annotated: 0, total: 2 };
    const { svg, container, handle } = await mountQuadrantEditor(service, { progress });
    clickPixel(svg, 4.5, 2.5); // 3
    clickPixel(svg, 0.5, 0.5); // 0
    expect(container.querySelector<HTMLElement>(".dirty-flag")!.hidden).toBe(false);
    pressKey("s");
    await vi.waitFor(() => expect(handle.state().dirty).toBe(false));
    expect(service.labels.get("000001")!.selected).toEqual([0, 3]);
    expect(handle.state().lastAck.selected).toEqual([0, 3]);
    expect(container.querySelector<HTMLElement>(".dirty-flag")!.hidden).toBe(true);
    expect(container.querySelector(".progress")!.textContent).toBe("1/2 annotated");
    handle.dispose();
  });

  it("save failure keeps the dirty state and offers a working retry", async () => {
    const service = makeService([frameInfo("000001")]);
    service.failNextPost = 500;
    const { svg, container, handle } = await mountQuadrantEditor(service);
    clickPixel(svg, 0.5, 0.5);
    pressKey("s");
    const banner = container.querySelector<HTMLElement>(".banner-error")!;
    await vi.waitFor(() => expect(banner.hidden).toBe(false));
    expect(banner.textContent).toContain("Save failed");
    expect(handle.state().dirty).toBe(true);
    expect(service.labels.has("000001")).toBe(false);

    banner.querySelector<HTMLButtonElement>(".retry-button")!.click();
    await vi.waitFor(() => expect(handle.state().dirty).toBe(false));
    expect(banner.hidden).toBe(true);
    expect(service.labels.get("000001")!.selected).toEqual([0]);
    handle.dispose();
  });

  it("warns when another writer moved the labels since load", async () => {
    const service = makeService([frameInfo("000001")]);
    const { svg, container, handle } = await mountQuadrantEditor(service);
    // Concurrent tab writes after our editor loaded the (empty) labels.
    service.labels.set("000001", {
      frame_id: "000001",
      selected: [2],
      timestamp: "t99",
      annotator: "other-tab",
    });
    clickPixel(svg, 0.5, 0.5);
    pressKey("s");
    await vi.waitFor(() => expect(handle.state().dirty).toBe(false));
    const warn = container.querySelector<HTMLElement>(".banner-warn")!;
    expect(warn.hidden).toBe(false);
    expect(warn.textContent).toContain("overwrites");
    // Last writer wins: our selection replaced the other tab's.
    expect(service.labels.get("000001")!.selected).toEqual([0]);
    handle.dispose();
  });

  it("arrow keys navigate between frames", async () => {
    const deltas: number[] = [];
    const { handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]), {
      onNavigate: (d) => deltas.push(d),
    });
    pressKey("ArrowRight");
    pressKey("ArrowLeft");
    pressKey("ArrowRight");
    expect(deltas).toEqual([1, -1, 1]);
    handle.dispose();
  });

  it("keyboard shortcuts are ignored while typing in a form field", async () => {
    const { svg, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    clickPixel(svg, 0.5, 0.5);
    const input = document.createElement("input");
    document.body.appendChild(input);
    input.dispatchEvent(new KeyboardEvent("keydown", { key: "u", bubbles: true }));
    expect(sortedIds(handle.state().selected)).toEqual([0]);
    handle.dispose();
  });

  it("dispose removes the keyboard listener", async () => {
    const { svg, handle } = await mountQuadrantEditor(makeService([frameInfo("000001")]));
    clickPixel(svg, 0.5, 0.5);
    handle.dispose();
    pressKey("u");
    expect(sortedIds(handle.state().selected)).toEqual([0]);
  });

  it("shows the frame lux and id in the header", async () => {
    const frames = [frameInfo("000001", 12000)];
    const { container, handle } = await mountQuadrantEditor(makeService(frames), { frames });
    expect(container.querySelector(".frame-id")!.textContent).toBe("000001");
    expect(container.querySelector(".lux-badge")!.textContent).toBe("12.0k lx");
    handle.dispose();
  });
});

describe("frame browser", () => {
  it("lists frames with annotated status and progress", async () => {
    const frames = [
      ...Array.from({ length: 3 }, (_, i) => frameInfo(`00000${i}`, 50, true)),
      ...Array.from({ length: 7 }, (_, i) => frameInfo(`00001${i}`, 2000, false)),
    ];
    expect(progressText(frames)).toBe("3/10");
    const container = document.createElement("div");
    document.body.appendChild(container);
    const opened: number[] = [];
    await mountBrowser(container, new ApiClient("", makeService(frames).fetchImpl), (_f, i) =>
      opened.push(i),
    );
    expect(container.querySelector(".progress")!.textContent).toBe("3/10 annotated");
    const rows = container.querySelectorAll<HTMLButtonElement>(".frame-row");
    expect(rows).toHaveLength(10);
    expect(rows[0]!.querySelector(".status")!.classList.contains("done")).toBe(true);
    expect(rows[9]!.querySelector(".status")!.classList.contains("todo")).toBe(true);
    rows[4]!.click();
    expect(opened).toEqual([4]);
  });

  it("shows an empty-state message for an empty manifest", async () => {
    const container = document.createElement("div");
    document.body.appendChild(container);
    await mountBrowser(container, new ApiClient("", makeService([]).fetchImpl), () => {});
    expect(container.querySelector(".empty-state")!.textContent).toContain("No frames");
  });

  it("shows an unreachable banner whose retry reloads the list", async () => {
    const service = makeService([frameInfo("000001")]);
    service.unreachable = true;
    const container = document.createElement("div");
    document.body.appendChild(container);
    await mountBrowser(container, new ApiClient("", service.fetchImpl), () => {});
    const banner = container.querySelector<HTMLElement>(".banner-error")!;
    expect(banner.textContent).toContain("unreachable");

    service.unreachable = false;
    banner.querySelector<HTMLButtonElement>(".retry-button")!.click();
    await vi.waitFor(() =>
      expect(container.querySelectorAll(".frame-row")).toHaveLength(1),
    );
  });
});
