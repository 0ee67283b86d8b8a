// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { renderPreview, renderPreviewError } from "../src/preview.js";

function container(): HTMLElement {
  const div = document.createElement("div");
  document.body.appendChild(div);
  return div;
}

describe("preview panel", () => {
  it("shows text inline", () => {
    const el = container();
    renderPreview(el, "r1", { modality: "text", payload: "hello world" });
    expect(el.textContent).toContain("r1");
    expect(el.textContent).toContain("hello world");
  });

  it("truncates long text behind an expander", () => {
    const el = container();
    const long = "x".repeat(1000);
    renderPreview(el, "r2", { modality: "text", payload: long });
    const body = el.querySelector(".preview-text")!;
    expect(body.textContent!.length).toBeLessThan(650);
    (el.querySelector("button") as HTMLButtonElement).click();
    expect(body.textContent).toBe(long);
    expect(el.querySelector("button")).toBeNull();
  });

  it("renders an image element for image records", () => {
    const el = container();
    renderPreview(el, "r3", { modality: "image", payload: "http://media/x.png" });
    const img = el.querySelector("img")!;
    expect(img.src).toBe("http://media/x.png");
  });

  it("falls back to a placeholder when media errors", () => {
    const el = container();
    renderPreview(el, "r4", { modality: "image", payload: "http://broken/x.png" });
    const img = el.querySelector("img")!;
    img.dispatchEvent(new Event("error"));
    expect(el.querySelector("img")).toBeNull();
    expect(el.textContent).toContain("media unavailable");
    expect(el.textContent).toContain("http://broken/x.png");
  });

  it("renders an explicit error state", () => {
    const el = container();
    renderPreviewError(el, "r5", "fetch failed");
    expect(el.textContent).toContain("r5");
    expect(el.textContent).toContain("fetch failed");
  });
});
