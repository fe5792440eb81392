import { describe, expect, it } from 'vitest';

import { buildRequest } from '../src/requests.js';
import { categoryColor } from '../src/colors.js';

const OPTIONS = { n: 3, seed: 5, use_fsm: true };

describe('buildRequest', () => {
  it('ugen sends only sampler options', () => {
    expect(buildRequest('ugen', [], [], null, OPTIONS)).toEqual({
      n: 3,
      seed: 5,
      use_fsm: true,
    });
  });

  it('gen-t sends the type names', () => {
    const body = buildRequest('gen-t', [{ category: 'text' }, { category: 'image' }], [], null, OPTIONS);
    expect(body.types).toEqual(['text', 'image']);
    expect(body.sizes).toBeUndefined();
  });

  it('gen-ts pairs sizes with their types', () => {
    const rows = [
      { category: 'text', w: 40, h: 20 },
      { category: 'image', w: 60, h: 50 },
    ];
    const body = buildRequest('gen-ts', rows, [], null, OPTIONS);
    expect(body.sizes).toEqual([
      [40, 20],
      [60, 50],
    ]);
  });

  it('gen-ts rejects a row missing a dimension', () => {
    expect(() => buildRequest('gen-ts', [{ category: 'text', w: 40 }], [], null, OPTIONS)).toThrow(
      /width and height/,
    );
  });

  it('gen-r validates relationship endpoints', () => {
    const rows = [{ category: 'text' }, { category: 'image' }];
    const body = buildRequest('gen-r', rows, [{ a: 0, b: 1, relation: 'above' }], null, OPTIONS);
    expect(body.relationships).toEqual([{ a: 0, b: 1, relation: 'above' }]);
    expect(() =>
      buildRequest('gen-r', rows, [{ a: 0, b: 0, relation: 'above' }], null, OPTIONS),
    ).toThrow(/distinct/);
    expect(() =>
      buildRequest('gen-r', rows, [{ a: 0, b: 1, relation: 'inside' }], null, OPTIONS),
    ).toThrow(/unknown relation/);
  });

  it('refinement wraps the canvas as the draft', () => {
    const layout = { elements: [{ category: 'text', bbox: [1, 2, 3, 4] as [number, number, number, number] }] };
    const body = buildRequest('refinement', [], [], layout, { seed: 9 });
    expect(body.draft).toEqual(layout);
    expect(body.seed).toBe(9);
  });

  it('completion requires a seeded canvas', () => {
    expect(() => buildRequest('completion', [], [], null, OPTIONS)).toThrow(/seed element/);
  });
});

describe('categoryColor', () => {
  it('is deterministic per index and distinct for neighbors', () => {
    expect(categoryColor(3)).toBe(categoryColor(3));
    expect(categoryColor(0)).not.toBe(categoryColor(1));
  });
});
