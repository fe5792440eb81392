// @vitest-environment jsdom
//
// The same studio loop, but against a live service (set
// UNILAYOUT_SERVICE_URL; scripts/e2e.sh builds a checkpoint and serves it).

import { beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { Studio } from '../src/app.js';

const SERVICE = process.env.UNILAYOUT_SERVICE_URL;

describe.skipIf(!SERVICE)('studio loop against a live service', () => {
  let studio: Studio;
  let api: ApiClient;

  beforeAll(async () => {
    document.body.innerHTML = '<div id="app"></div>';
    api = new ApiClient(SERVICE!, fetch.bind(globalThis));
    studio = await Studio.boot(document.getElementById('app')!, api);
  });

  it('drives entry -> generate -> apply -> drag -> refine -> undo', async () => {
    const [first, second] = studio.meta.categories;
    expect(first && second).toBeTruthy();

    studio.setTask('gen-t');
    studio.addTypeRow(first!);
    studio.addTypeRow(second!);
    (document.querySelector('[data-role="seed"]') as HTMLInputElement).value = '11';
    const generated = await studio.runActiveTask();
    expect(generated).not.toBeNull();
    expect(generated!.layouts.every((l) => l !== null)).toBe(true);

    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    const applied = studio.state.current()!;
    expect(applied.elements.length).toBe(2);

    studio.dragElementByBins(0, 4, 3);
    const misaligned = studio.state.current()!;

    studio.setTask('refinement');
    const refined = await studio.runActiveTask();
    expect(refined).not.toBeNull();
    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    const refinedLayout = studio.state.current()!;
    expect(refinedLayout.elements.map((e) => e.category).sort()).toEqual(
      misaligned.elements.map((e) => e.category).sort(),
    );

    (document.querySelector('[data-role="undo"]') as HTMLButtonElement).click();
    expect(studio.state.current()).toEqual(misaligned);

    const paths = api.requestLog.map((r) => r.path);
    for (const path of paths) {
      expect(path).toMatch(/^\/(meta|generate\/(ugen|gen-t|gen-ts|gen-r)|refine|complete)$/);
    }
  });

  it('pinned seeds replay exactly over the wire', async () => {
    studio.setTask('ugen');
    (document.querySelector('[data-role="seed"]') as HTMLInputElement).value = '42';
    const a = await studio.runActiveTask();
    const b = await studio.runActiveTask();
    expect(a!.layouts).toEqual(b!.layouts);
  });

  it('export/import round-trips bins exactly', async () => {
    studio.setTask('ugen');
    await studio.runActiveTask();
    (document.querySelector('[data-role-apply="0"]') as HTMLButtonElement).click();
    (document.querySelector('[data-role="export"]') as HTMLButtonElement).click();
    const io = document.querySelector('[data-role="io"]') as HTMLTextAreaElement;
    const exported = io.value;
    (document.querySelector('[data-role="clear"]') as HTMLButtonElement).click();
    io.value = exported;
    (document.querySelector('[data-role="import"]') as HTMLButtonElement).click();
    (document.querySelector('[data-role="export"]') as HTMLButtonElement).click();
    expect(io.value).toBe(exported);
  });

  it('placing a seed element and completing keeps it verbatim', async () => {
    (document.querySelector('[data-role="clear"]') as HTMLButtonElement).click();
    (document.querySelector('[data-role="add-element"]') as HTMLButtonElement).click();
    const seedBox = studio.state.current()!.elements[0]!;
    studio.setTask('completion');
    const completions: string[] = [];
    for (const seed of ['1', '2', '3']) {
      (document.querySelector('[data-role="seed"]') as HTMLInputElement).value = seed;
      const response = await studio.runActiveTask();
      const layout = response!.layouts[0]!;
      expect(layout.elements[0]).toEqual(seedBox);
      completions.push(JSON.stringify(layout));
    }
    expect(new Set(completions).size).toBeGreaterThan(1); // top-k variety
  });
});
