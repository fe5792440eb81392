// Canvas document state: the current layout in bins, selection, and a
// bounded undo history. All edits snap to the bin grid so anything on the
// canvas stays token-representable.

import type { ElementWire, LayoutWire } from './types.js';

export const UNDO_LIMIT = 100;

export interface CanvasStateSnapshot {
  layout: LayoutWire | null;
  selection: number | null;
}

function cloneLayout(layout: LayoutWire | null): LayoutWire | null {
  if (!layout) return null;
  return {
    canvas: layout.canvas ? { ...layout.canvas } : undefined,
    elements: layout.elements.map((e) => ({ category: e.category, bbox: [...e.bbox] })),
  };
}

export function clampBin(value: number, bins: number): number {
  return Math.min(Math.max(Math.round(value), 0), bins - 1);
}

export class CanvasState {
  private layout: LayoutWire | null = null;
  private selection: number | null = null;
  private history: CanvasStateSnapshot[] = [];

  constructor(readonly bins: number) {}

  current(): LayoutWire | null {
    return cloneLayout(this.layout);
  }

  selected(): number | null {
    return this.selection;
  }

  historyDepth(): number {
    return this.history.length;
  }

  private push(): void {
    this.history.push({ layout: cloneLayout(this.layout), selection: this.selection });
    if (this.history.length > UNDO_LIMIT) {
      this.history.shift();
    }
  }

  /** Replace the canvas (applying a generated candidate); one undo step. */
  apply(layout: LayoutWire): void {
    this.push();
    this.layout = cloneLayout(layout);
    this.selection = null;
  }

  clear(): void {
    this.push();
    this.layout = null;
    this.selection = null;
  }

  select(index: number | null): void {
    if (index !== null && (!this.layout || index >= this.layout.elements.length)) {
      throw new Error(`no element at index ${index}`);
    }
    this.selection = index;
  }

  /** Move an element by whole bins; drags quantize to the grid. */
  moveElement(index: number, dxBins: number, dyBins: number): void {
    if (!this.layout) throw new Error('empty canvas');
    const element = this.layout.elements[index];
    if (!element) throw new Error(`no element at index ${index}`);
    this.push();
    const [x, y, w, h] = element.bbox;
    element.bbox = [
      clampBin(x + dxBins, this.bins),
      clampBin(y + dyBins, this.bins),
      w,
      h,
    ];
  }

  resizeElement(index: number, wBins: number, hBins: number): void {
    if (!this.layout) throw new Error('empty canvas');
    const element = this.layout.elements[index];
    if (!element) throw new Error(`no element at index ${index}`);
    this.push();
    element.bbox = [
      element.bbox[0],
      element.bbox[1],
      clampBin(wBins, this.bins),
      clampBin(hBins, this.bins),
    ];
  }

  addElement(element: ElementWire): void {
    this.push();
    if (!this.layout) {
      this.layout = { elements: [] };
    }
    this.layout.elements.push({
      category: element.category,
      bbox: [
        clampBin(element.bbox[0], this.bins),
        clampBin(element.bbox[1], this.bins),
        clampBin(element.bbox[2], this.bins),
        clampBin(element.bbox[3], this.bins),
      ],
    });
  }

  removeElement(index: number): void {
    if (!this.layout) throw new Error('empty canvas');
    this.push();
    this.layout.elements.splice(index, 1);
    if (!this.layout.elements.length) this.layout = null;
    this.selection = null;
  }

  undo(): boolean {
    const snapshot = this.history.pop();
    if (!snapshot) return false;
    this.layout = snapshot.layout;
    this.selection = snapshot.selection;
    return true;
  }

  /** Serialize the canvas to the dataset layout schema (bins). */
  exportJson(): string {
    if (!this.layout) throw new Error('empty canvas');
    return JSON.stringify(this.layout);
  }

  /** Load a canvas from exported JSON; bins must round-trip exactly. */
  importJson(text: string): void {
    const parsed = JSON.parse(text) as LayoutWire;
    if (!parsed || !Array.isArray(parsed.elements) || !parsed.elements.length) {
      throw new Error('layout JSON needs a non-empty elements array');
    }
    for (const element of parsed.elements) {
      if (
        typeof element.category !== 'string' ||
        !Array.isArray(element.bbox) ||
        element.bbox.length !== 4 ||
        element.bbox.some((v) => !Number.isInteger(v) || v < 0 || v >= this.bins)
      ) {
        throw new Error('layout JSON has a malformed element');
      }
    }
    this.push();
    this.layout = cloneLayout(parsed);
    this.selection = null;
  }
}
