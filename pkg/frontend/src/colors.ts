// Deterministic category colors: stable legends across sessions without any
// stored palette. Hue walks the golden angle; index in the category list is
// the only input.

export function categoryColor(index: number): string {
  const hue = (index * 137.508) % 360;
  return `hsl(${hue.toFixed(1)}, 62%, 62%)`;
}
