// DOM rendering of layouts: absolutely positioned boxes inside a fixed
// aspect frame, scaled from bins to percentages.

import { categoryColor } from './colors.js';
import type { LayoutWire, SampleFlag } from './types.js';

export function renderLayout(
  doc: Document,
  layout: LayoutWire,
  bins: number,
  categories: string[],
  options: { labels?: boolean } = {},
): HTMLElement {
  const frame = doc.createElement('div');
  frame.className = 'layout-frame';
  for (const [index, element] of layout.elements.entries()) {
    const [x, y, w, h] = element.bbox;
    const box = doc.createElement('div');
    box.className = 'layout-box';
    box.dataset.index = String(index);
    box.dataset.category = element.category;
    box.style.left = `${(x / bins) * 100}%`;
    box.style.top = `${(y / bins) * 100}%`;
    box.style.width = `${(w / bins) * 100}%`;
    box.style.height = `${(h / bins) * 100}%`;
    box.style.background = categoryColor(Math.max(categories.indexOf(element.category), 0));
    if (options.labels !== false) {
      const label = doc.createElement('span');
      label.className = 'layout-label';
      label.textContent = element.category;
      box.appendChild(label);
    }
    frame.appendChild(box);
  }
  return frame;
}

export function renderBadge(doc: Document, flag: SampleFlag): HTMLElement {
  const badge = doc.createElement('span');
  if (flag.error) {
    badge.className = 'badge badge-error';
    badge.textContent = 'unparseable';
  } else if (flag.flagged || flag.violations.length) {
    badge.className = 'badge badge-violated';
    badge.textContent = `${flag.violations.length || 'constraint'} violated`;
  } else {
    badge.className = 'badge badge-ok';
    badge.textContent = 'satisfied';
  }
  return badge;
}
