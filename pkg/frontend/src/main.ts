/** Hash-routed entry point: #/ lists frames, #/frame/<id> opens the editor. */

import { ApiClient, FrameInfo } from "./api.js";
import { mountBrowser } from "./browser.js";
import { EditorHandle, mountEditor } from "./editor.js";

export function start(container: HTMLElement, api: ApiClient): { stop(): void } {
  const win = container.ownerDocument.defaultView!;
  let editor: EditorHandle | null = null;

  function openFrame(frames: FrameInfo[], index: number): void {
    const frame = frames[index];
    if (frame) win.location.hash = `#/frame/${encodeURIComponent(frame.id)}`;
  }

  async function route(): Promise<void> {
    editor?.dispose();
    editor = null;
    const match = /^#\/frame\/(.+)$/.exec(win.location.hash);
    if (!match) {
      await mountBrowser(container, api, openFrame);
      return;
    }
    const frameId = decodeURIComponent(match[1]!);
    const frames = await api.frames();
    const index = frames.findIndex((f) => f.id === frameId);
    if (index < 0) {
      win.location.hash = "#/";
      return;
    }
    const annotated = frames.filter((f) => f.annotated).length;
    editor = await mountEditor(
      container,
      api,
      frames[index]!,
      { annotated, total: frames.length },
      {
        onNavigate(delta: number): void {
          const next = index + delta;
          if (next >= 0 && next < frames.length) openFrame(frames, next);
        },
      },
    );
  }

  const onHashChange = (): void => {
    void route().catch((err) => {
      container.innerHTML = "";
      const banner = container.ownerDocument.createElement("div");
      banner.className = "banner banner-error";
      banner.textContent = String(err);
      container.appendChild(banner);
    });
  };
  win.addEventListener("hashchange", onHashChange);
  onHashChange();

  return {
    stop(): void {
      win.removeEventListener("hashchange", onHashChange);
      editor?.dispose();
      editor = null;
    },
  };
}

const appRoot =
  typeof document !== "undefined" ? document.getElementById("app") : null;
if (appRoot) start(appRoot, new ApiClient());
