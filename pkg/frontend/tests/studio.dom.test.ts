// @vitest-environment jsdom
//
// Drives the studio's DOM through the full editing loop against a scripted
// stand-in service that honours the documented API shapes.

import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { Studio } from '../src/app.js';
import type { GenerateRequest, LayoutWire, Meta } from '../src/types.js';

const META: Meta = {
  snapshot_id: 'fake-1',
  categories: ['button', 'icon', 'image', 'text'],
  background: [],
  bins: 128,
  max_elements: 20,
  multi_task: false,
  model: {},
  tasks: ['ugen', 'gen-t', 'gen-ts', 'gen-r', 'refinement', 'completion'],
};

function fakeLayout(types: string[]): LayoutWire {
  return {
    canvas: { w: 1, h: 1 },
    elements: types.map((category, i) => ({
      category,
      bbox: [8, 8 + 24 * i, 48, 16] as [number, number, number, number],
    })),
  };
}

function fakeFetch(): typeof fetch {
  return async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, '');
    const body = init?.body ? (JSON.parse(String(init.body)) as GenerateRequest) : {};
    const reply = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), { status });
    if (path === '/meta') return reply(META);
    const n = body.n ?? 1;
    let types = body.types ?? ['image', 'text'];
    if (body.draft) {
      // refinement echoes the draft's categories, aligned to a column
      types = body.draft.elements.map((e) => e.category);
      return reply({
        snapshot_id: META.snapshot_id,
        seed: body.seed ?? 0,
        layouts: Array.from({ length: n }, () => fakeLayout(types)),
        flags: Array.from({ length: n }, () => ({ flagged: false, violations: [], error: null })),
      });
    }
    if (body.partial) {
      const kept = body.partial.elements;
      const extended: LayoutWire = {
        canvas: body.partial.canvas,
        elements: [...kept, { category: 'text', bbox: [8, 100, 40, 12] }],
      };
      return reply({
        snapshot_id: META.snapshot_id,
        seed: body.seed ?? 0,
        layouts: Array.from({ length: n }, () => extended),
        flags: Array.from({ length: n }, () => ({ flagged: false, violations: [], error: null })),
      });
    }
    if (types.some((t) => !META.categories.includes(t))) {
      return reply({ error: `unknown category`, field: 'types' }, 409);
    }
    return reply({
      snapshot_id: META.snapshot_id,
      seed: body.seed ?? 0,
      layouts: Array.from({ length: n }, () => fakeLayout(types)),
      flags: Array.from({ length: n }, () => ({ flagged: false, violations: [], error: null })),
    });
  };
}

describe('studio loop (scripted DOM)', () => {
  let studio: Studio;
  let api: ApiClient;

  beforeEach(async () => {
    document.body.innerHTML = '<div id="app"></div>';
    api = new ApiClient('http://fake', fakeFetch());
    studio = await Studio.boot(document.getElementById('app')!, api);
  });

  it('constraint entry -> generate -> apply -> drag -> refine -> undo', async () => {
    // enter type constraints through the panel
    studio.setTask('gen-t');
    studio.addTypeRow('image');
    studio.addTypeRow('text');
    expect(document.querySelectorAll('.type-row')).toHaveLength(2);

    // generate candidates and check the gallery rendered them
    const response = await studio.runActiveTask();
    expect(response?.layouts).toHaveLength(4);
    expect(document.querySelectorAll('.candidate')).toHaveLength(4);
    expect(document.querySelectorAll('.candidate .layout-box').length).toBeGreaterThan(0);

    // apply the first candidate onto the canvas
    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    const afterApply = studio.state.current();
    expect(afterApply?.elements).toHaveLength(2);

    // drag an element out of alignment (bin-snapped)
    studio.dragElementByBins(0, 3, 2);
    const misaligned = studio.state.current()!.elements[0]!.bbox;
    expect(misaligned[0]).toBe(11);
    expect(misaligned[1]).toBe(10);

    // refine the draft; the canvas is replaced by the service's layout
    studio.setTask('refinement');
    await studio.runActiveTask();
    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    const refined = studio.state.current()!;
    expect(refined.elements.map((e) => e.category).sort()).toEqual(['image', 'text']);
    expect(refined.elements[0]!.bbox[0]).toBe(8); // back on the column

    // one undo returns the misaligned draft
    (document.querySelector('[data-role="undo"]') as HTMLButtonElement).click();
    expect(studio.state.current()!.elements[0]!.bbox[0]).toBe(11);

    // the studio talked to the service only through documented endpoints
    const paths = api.requestLog.map((r) => r.path);
    expect(paths[0]).toBe('/meta');
    for (const path of paths.slice(1)) {
      expect(path).toMatch(/^\/(generate\/(ugen|gen-t|gen-ts|gen-r)|refine|complete)$/);
    }
  });

  it('completion flow extends a placed seed element', async () => {
    (document.querySelector('[data-role="add-element"]') as HTMLButtonElement).click();
    expect(studio.state.current()!.elements).toHaveLength(1);
    studio.setTask('completion');
    const response = await studio.runActiveTask();
    expect(response!.layouts[0]!.elements.length).toBeGreaterThan(1);
  });

  it('export/import round-trips the canvas bins exactly', async () => {
    studio.setTask('ugen');
    await studio.runActiveTask();
    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    (document.querySelector('[data-role="export"]') as HTMLButtonElement).click();
    const io = document.querySelector('[data-role="io"]') as HTMLTextAreaElement;
    const exported = io.value;
    (document.querySelector('[data-role="clear"]') as HTMLButtonElement).click();
    expect(studio.state.current()).toBeNull();
    io.value = exported;
    (document.querySelector('[data-role="import"]') as HTMLButtonElement).click();
    (document.querySelector('[data-role="export"]') as HTMLButtonElement).click();
    expect(io.value).toBe(exported);
  });

  it('service errors surface inline with the offending field', async () => {
    studio.setTask('gen-t');
    studio.addTypeRow('image');
    // bypass client-side validation by poking an unknown type directly
    (studio as unknown as { typeRows: { category: string }[] }).typeRows = [
      { category: 'exotic' },
    ];
    const result = await studio.runActiveTask();
    expect(result).toBeNull();
    const line = document.querySelector('[data-role="error"]') as HTMLElement;
    expect(line.hidden).toBe(false);
    expect(line.textContent).toContain('409');
  });

  it('stale responses are dropped', async () => {
    studio.setTask('ugen');
    const slow = studio.runActiveTask();
    const fast = studio.runActiveTask(); // supersedes the first
    const [slowResult, fastResult] = await Promise.all([slow, fast]);
    expect(slowResult).toBeNull();
    expect(fastResult).not.toBeNull();
  });
});
