/** Data preview panel: inline text, media from URI, placeholder on failure. */

import type { Preview } from "./types.js";

const TRUNCATE_AT = 600;

export function renderPreview(container: HTMLElement, recordId: string, preview: Preview): void {
  container.replaceChildren();
  const title = document.createElement("div");
  title.className = "preview-id";
  title.textContent = recordId;
  container.appendChild(title);

  if (preview.modality === "text") {
    const body = document.createElement("div");
    body.className = "preview-text";
    if (preview.payload.length > TRUNCATE_AT) {
      body.textContent = preview.payload.slice(0, TRUNCATE_AT) + "…";
      const expand = document.createElement("button");
      expand.textContent = "show all";
      expand.onclick = () => {
        body.textContent = preview.payload;
        expand.remove();
      };
      container.appendChild(body);
      container.appendChild(expand);
    } else {
      body.textContent = preview.payload;
      container.appendChild(body);
    }
    return;
  }

  const placeholder = () => {
    const fallback = document.createElement("div");
    fallback.className = "preview-placeholder";
    fallback.textContent = `media unavailable: ${preview.payload}`;
    container.appendChild(fallback);
  };

  if (preview.modality === "image") {
    const img = document.createElement("img");
    img.src = preview.payload;
    img.alt = recordId;
    img.onerror = () => {
      img.remove();
      placeholder();
    };
    container.appendChild(img);
  } else {
    const video = document.createElement("video");
    video.src = preview.payload;
    video.controls = true;
    video.onerror = () => {
      video.remove();
      placeholder();
    };
    container.appendChild(video);
  }
}

export function renderPreviewError(container: HTMLElement, recordId: string, message: string): void {
  container.replaceChildren();
  const div = document.createElement("div");
  div.className = "preview-placeholder";
  div.textContent = `${recordId}: ${message}`;
  container.appendChild(div);
}
