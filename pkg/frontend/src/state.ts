/** View state container enforcing the viewer's invariants. */

import type { Mode, ViewState } from "./types.js";

export type Listener = (state: ViewState) => void;

const MIN_SELECTOR_RADIUS = 1e-6;

export class ViewStateStore {
  private state: ViewState = {
    mode: "3D",
    pointScale: 1.0,
    activeLayoutId: null,
    activeLabel: null,
    selectorRadius: 1.0,
  };
  private listeners = new Set<Listener>();

  get(): ViewState {
    return { ...this.state };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private commit(next: ViewState): void {
    this.state = next;
    for (const listener of this.listeners) listener(this.get());
  }

  setLayout(layoutId: string, outDim: number): void {
    const mode: Mode = outDim === 2 ? "2D" : "3D";
    this.commit({ ...this.state, activeLayoutId: layoutId, mode });
  }

  setPointScale(scale: number): void {
    this.commit({ ...this.state, pointScale: Math.max(0.01, scale) });
  }

  setActiveLabel(label: string | null): void {
    this.commit({ ...this.state, activeLabel: label });
  }

  /** Multiplicative resize; the radius never collapses to zero. */
  scaleSelector(factor: number): void {
    const radius = Math.max(MIN_SELECTOR_RADIUS, this.state.selectorRadius * factor);
    this.commit({ ...this.state, selectorRadius: radius });
  }

  setSelectorRadius(radius: number): void {
    this.commit({
      ...this.state,
      selectorRadius: Math.max(MIN_SELECTOR_RADIUS, radius),
    });
  }
}
