/** Frame browser: annotated/unannotated listing with lux badges. */

import { ApiClient, FrameInfo } from "./api.js";
import { formatLux } from "./editor.js";

export function progressText(frames: readonly FrameInfo[]): string {
  const annotated = frames.filter((f) => f.annotated).length;
  return `${annotated}/${frames.length}`;
}

export async function mountBrowser(
  container: HTMLElement,
  api: ApiClient,
  onOpen: (frames: FrameInfo[], index: number) => void,
): Promise<void> {
  const doc = container.ownerDocument;
  container.innerHTML = "";
  const root = doc.createElement("div");
  root.className = "frame-browser";
  container.appendChild(root);

  let frames: FrameInfo[];
  try {
    frames = await api.frames();
  } catch (err) {
    const banner = doc.createElement("div");
    banner.className = "banner banner-error";
    banner.append(`Annotation service unreachable: ${String(err)} `);
    const retry = doc.createElement("button");
    retry.type = "button";
    retry.className = "retry-button";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void mountBrowser(container, api, onOpen));
    banner.appendChild(retry);
    root.appendChild(banner);
    return;
  }

  const header = doc.createElement("header");
  header.className = "browser-header";
  header.innerHTML = `<h1>Traversability annotation</h1>
    <span class="progress">${progressText(frames)} annotated</span>`;
  root.appendChild(header);

  if (frames.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No frames in the manifest.";
    root.appendChild(empty);
    return;
  }

  const list = doc.createElement("ul");
  list.className = "frame-list";
  frames.forEach((frame, index) => {
    const item = doc.createElement("li");
    const button = doc.createElement("button");
    button.type = "button";
    button.className = "frame-row";
    button.dataset.frameId = frame.id;
    button.innerHTML = `
      <span class="frame-id">${frame.id}</span>
      <span class="lux-badge">${formatLux(frame.lux)}</span>
      <span class="status ${frame.annotated ? "done" : "todo"}">${
        frame.annotated ? "annotated" : "unannotated"
      }</span>`;
    button.addEventListener("click", () => onOpen(frames, index));
    item.appendChild(button);
    list.appendChild(item);
  });
  root.appendChild(list);
}
