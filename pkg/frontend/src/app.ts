// The studio controller: one task panel at a time feeds the request builder,
// candidates land in a gallery, and picking one replaces the canvas (with
// undo). The canvas doubles as the draft for refinement and the seed for
// completion, so every result can feed the next action.

import { ApiClient, ApiError } from './api.js';
import { CanvasState, clampBin } from './state.js';
import { buildRequest, type TypeRow } from './requests.js';
import { renderBadge, renderLayout } from './render.js';
import type {
  GenerateResponse,
  LayoutWire,
  Meta,
  RelationshipWire,
  SamplerOptions,
  TaskName,
} from './types.js';
import { RELATIONS } from './types.js';

const TASKS: { id: TaskName; label: string }[] = [
  { id: 'ugen', label: 'Generate freely' },
  { id: 'gen-t', label: 'From types' },
  { id: 'gen-ts', label: 'From types + sizes' },
  { id: 'gen-r', label: 'From relationships' },
  { id: 'refinement', label: 'Refine canvas' },
  { id: 'completion', label: 'Complete canvas' },
];

export class Studio {
  readonly state: CanvasState;
  meta: Meta;
  private activeTask: TaskName = 'ugen';
  private typeRows: TypeRow[] = [];
  private relationships: RelationshipWire[] = [];
  private requestCounter = 0;
  private inFlight = new Map<TaskName, number>();
  private lastResponse: GenerateResponse | null = null;
  private dragging: { index: number; startX: number; startY: number; moved: boolean } | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    meta: Meta,
  ) {
    this.meta = meta;
    this.state = new CanvasState(meta.bins);
    this.renderShell();
  }

  static async boot(root: HTMLElement, api: ApiClient): Promise<Studio> {
    const meta = await api.meta();
    return new Studio(root, api, meta);
  }

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  private element<T extends HTMLElement>(selector: string): T {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found as T;
  }

  // --- shell -------------------------------------------------------------
  private renderShell(): void {
    this.root.innerHTML = `
      <header class="topbar">
        <strong>layout studio</strong>
        <span class="meta-line" data-role="meta"></span>
      </header>
      <main class="columns">
        <section class="panel-column">
          <nav class="task-tabs" data-role="tasks"></nav>
          <form class="constraint-panel" data-role="panel"></form>
          <div class="error-line" data-role="error" hidden></div>
          <div class="gallery" data-role="gallery"></div>
        </section>
        <section class="canvas-column">
          <div class="canvas-tools">
            <button type="button" data-role="undo">Undo</button>
            <button type="button" data-role="clear">Clear</button>
            <button type="button" data-role="export">Export JSON</button>
            <button type="button" data-role="import">Import JSON</button>
            <select data-role="seed-category"></select>
            <button type="button" data-role="add-element">Add element</button>
          </div>
          <div class="canvas-host" data-role="canvas"></div>
          <textarea data-role="io" rows="4" placeholder="exported layout JSON"></textarea>
        </section>
      </main>
    `;
    this.element<HTMLElement>('[data-role=meta]').textContent =
      `snapshot ${this.meta.snapshot_id} | ${this.meta.categories.length} categories | ${this.meta.bins} bins`;
    const tabs = this.element<HTMLElement>('[data-role=tasks]');
    for (const task of TASKS) {
      const button = this.doc.createElement('button');
      button.type = 'button';
      button.textContent = task.label;
      button.dataset.task = task.id;
      button.addEventListener('click', () => this.setTask(task.id));
      tabs.appendChild(button);
    }
    const seedSelect = this.element<HTMLSelectElement>('[data-role=seed-category]');
    for (const name of this.meta.categories) {
      const option = this.doc.createElement('option');
      option.value = name;
      option.textContent = name;
      seedSelect.appendChild(option);
    }
    this.element<HTMLButtonElement>('[data-role=undo]').addEventListener('click', () => {
      this.state.undo();
      this.renderCanvas();
    });
    this.element<HTMLButtonElement>('[data-role=clear]').addEventListener('click', () => {
      this.state.clear();
      this.renderCanvas();
    });
    this.element<HTMLButtonElement>('[data-role=export]').addEventListener('click', () => {
      this.element<HTMLTextAreaElement>('[data-role=io]').value = this.state.exportJson();
    });
    this.element<HTMLButtonElement>('[data-role=import]').addEventListener('click', () => {
      this.guard(() => {
        this.state.importJson(this.element<HTMLTextAreaElement>('[data-role=io]').value);
        this.renderCanvas();
      });
    });
    this.element<HTMLButtonElement>('[data-role=add-element]').addEventListener('click', () => {
      const category = seedSelect.value || this.meta.categories[0] || '';
      const quarter = Math.floor(this.meta.bins / 4);
      this.state.addElement({ category, bbox: [quarter, quarter, quarter, quarter] });
      this.renderCanvas();
    });
    this.setTask('ugen');
    this.renderCanvas();
  }

  setTask(task: TaskName): void {
    this.activeTask = task;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>('[data-task]')) {
      button.classList.toggle('active', button.dataset.task === task);
    }
    this.renderPanel();
  }

  get task(): TaskName {
    return this.activeTask;
  }

  // --- constraint panel ---------------------------------------------------
  addTypeRow(category: string, w?: number, h?: number): void {
    this.typeRows.push({ category, w, h });
    this.renderPanel();
  }

  removeTypeRow(index: number): void {
    this.typeRows.splice(index, 1);
    this.relationships = this.relationships.filter((r) => r.a !== index && r.b !== index);
    this.renderPanel();
  }

  addRelationship(a: number, b: number, relation: string): void {
    this.relationships.push({ a, b, relation });
    this.renderPanel();
  }

  private renderPanel(): void {
    const panel = this.element<HTMLFormElement>('[data-role=panel]');
    panel.innerHTML = '';
    const needsTypes = ['gen-t', 'gen-ts', 'gen-r'].includes(this.activeTask);
    if (needsTypes) {
      const list = this.doc.createElement('div');
      list.className = 'type-rows';
      this.typeRows.forEach((row, index) => {
        const rowEl = this.doc.createElement('div');
        rowEl.className = 'type-row';
        rowEl.dataset.index = String(index);
        const label = this.doc.createElement('span');
        label.textContent = `#${index} ${row.category}`;
        rowEl.appendChild(label);
        if (this.activeTask === 'gen-ts') {
          for (const dim of ['w', 'h'] as const) {
            const input = this.doc.createElement('input');
            input.type = 'number';
            input.min = '0';
            input.max = String(this.meta.bins - 1);
            input.value = row[dim] === undefined ? '' : String(row[dim]);
            input.dataset.dim = dim;
            input.addEventListener('change', () => {
              row[dim] = input.value === '' ? undefined : clampBin(Number(input.value), this.meta.bins);
            });
            rowEl.appendChild(input);
          }
        }
        const remove = this.doc.createElement('button');
        remove.type = 'button';
        remove.textContent = 'x';
        remove.dataset.roleRemove = String(index);
        remove.addEventListener('click', () => this.removeTypeRow(index));
        rowEl.appendChild(remove);
        list.appendChild(rowEl);
      });
      panel.appendChild(list);
      const select = this.doc.createElement('select');
      select.dataset.role = 'type-select';
      for (const name of this.meta.categories) {
        const option = this.doc.createElement('option');
        option.value = name;
        option.textContent = name;
        select.appendChild(option);
      }
      const add = this.doc.createElement('button');
      add.type = 'button';
      add.textContent = 'Add type';
      add.dataset.role = 'add-type';
      add.addEventListener('click', () =>
        this.addTypeRow(select.value, this.activeTask === 'gen-ts' ? 16 : undefined,
                        this.activeTask === 'gen-ts' ? 16 : undefined),
      );
      panel.append(select, add);
    }
    if (this.activeTask === 'gen-r') {
      const relationList = this.doc.createElement('div');
      relationList.className = 'relation-rows';
      this.relationships.forEach((rel, index) => {
        const rowEl = this.doc.createElement('div');
        rowEl.className = 'relation-row';
        rowEl.textContent = `#${rel.a} ${rel.relation} #${rel.b}`;
        const remove = this.doc.createElement('button');
        remove.type = 'button';
        remove.textContent = 'x';
        remove.addEventListener('click', () => {
          this.relationships.splice(index, 1);
          this.renderPanel();
        });
        rowEl.appendChild(remove);
        relationList.appendChild(rowEl);
      });
      panel.appendChild(relationList);
      const selectA = this.doc.createElement('select');
      selectA.dataset.role = 'rel-a';
      const selectB = this.doc.createElement('select');
      selectB.dataset.role = 'rel-b';
      for (const [index, row] of this.typeRows.entries()) {
        for (const select of [selectA, selectB]) {
          const option = this.doc.createElement('option');
          option.value = String(index);
          option.textContent = `#${index} ${row.category}`;
          select.appendChild(option);
        }
      }
      const relationSelect = this.doc.createElement('select');
      relationSelect.dataset.role = 'rel-kind';
      for (const relation of RELATIONS) {
        const option = this.doc.createElement('option');
        option.value = relation;
        option.textContent = relation;
        relationSelect.appendChild(option);
      }
      const add = this.doc.createElement('button');
      add.type = 'button';
      add.textContent = 'Add relationship';
      add.dataset.role = 'add-relationship';
      add.addEventListener('click', () =>
        this.guard(() =>
          this.addRelationship(Number(selectA.value), Number(selectB.value), relationSelect.value),
        ),
      );
      panel.append(selectA, relationSelect, selectB, add);
    }
    const controls = this.doc.createElement('div');
    controls.className = 'sampler-controls';
    controls.innerHTML = `
      <label>n <input type="number" min="1" max="16" value="4" data-role="n"></label>
      <label>seed <input type="number" value="" placeholder="auto" data-role="seed"></label>
      <label><input type="checkbox" checked data-role="fsm"> constrained decoding</label>
      <button type="button" data-role="go">${this.actionLabel()}</button>
    `;
    panel.appendChild(controls);
    this.element<HTMLButtonElement>('[data-role=go]').addEventListener('click', () => {
      void this.runActiveTask();
    });
  }

  private actionLabel(): string {
    if (this.activeTask === 'refinement') return 'Refine';
    if (this.activeTask === 'completion') return 'Complete';
    return 'Generate';
  }

  samplerOptions(): SamplerOptions {
    const n = Number(this.element<HTMLInputElement>('[data-role=n]').value) || 1;
    const seedRaw = this.element<HTMLInputElement>('[data-role=seed]').value;
    const options: SamplerOptions = {
      n,
      use_fsm: this.element<HTMLInputElement>('[data-role=fsm]').checked,
    };
    if (seedRaw.trim() !== '') options.seed = Number(seedRaw);
    if (this.activeTask === 'refinement') options.strategy = 'greedy';
    return options;
  }

  /** Fire the active panel's request; stale responses are dropped. */
  async runActiveTask(): Promise<GenerateResponse | null> {
    const task = this.activeTask;
    const ticket = ++this.requestCounter;
    this.inFlight.set(task, ticket);
    this.showError(null);
    let response: GenerateResponse;
    try {
      const body = buildRequest(
        task,
        this.typeRows,
        this.relationships,
        this.state.current(),
        this.samplerOptions(),
      );
      response = await this.api.generate(task, body);
    } catch (error) {
      if (this.inFlight.get(task) === ticket) this.showError(error);
      return null;
    }
    if (this.inFlight.get(task) !== ticket) return null; // superseded
    this.lastResponse = response;
    this.renderGallery(response);
    return response;
  }

  private showError(error: unknown): void {
    const line = this.element<HTMLElement>('[data-role=error]');
    for (const marked of this.root.querySelectorAll('.field-error')) {
      marked.classList.remove('field-error');
    }
    if (!error) {
      line.hidden = true;
      line.textContent = '';
      return;
    }
    line.hidden = false;
    if (error instanceof ApiError) {
      line.textContent = `${error.status}: ${error.message}`;
      if (error.field) {
        const target = this.root.querySelector(`[data-role=panel] [data-field=${error.field}]`);
        target?.classList.add('field-error');
        this.element<HTMLFormElement>('[data-role=panel]').classList.add('field-error');
      }
    } else {
      line.textContent = String((error as Error).message ?? error);
    }
  }

  // --- gallery -------------------------------------------------------------
  private renderGallery(response: GenerateResponse): void {
    const gallery = this.element<HTMLElement>('[data-role=gallery]');
    gallery.innerHTML = '';
    response.layouts.forEach((layout, index) => {
      const card = this.doc.createElement('div');
      card.className = 'candidate';
      card.dataset.index = String(index);
      const flag = response.flags[index];
      if (flag) card.appendChild(renderBadge(this.doc, flag));
      if (layout) {
        card.appendChild(renderLayout(this.doc, layout, this.meta.bins, this.meta.categories));
        const apply = this.doc.createElement('button');
        apply.type = 'button';
        apply.textContent = 'Apply to canvas';
        apply.dataset.roleApply = String(index);
        apply.addEventListener('click', () => {
          this.applyCandidate(index);
        });
        card.appendChild(apply);
      } else {
        const note = this.doc.createElement('p');
        note.textContent = flag?.error ?? 'unparseable sample';
        card.appendChild(note);
      }
      gallery.appendChild(card);
    });
  }

  applyCandidate(index: number): void {
    const layout = this.lastResponse?.layouts[index];
    if (!layout) throw new Error(`candidate ${index} has no layout`);
    this.state.apply(layout);
    this.renderCanvas();
  }

  // --- canvas ----------------------------------------------------------------
  renderCanvas(): void {
    const host = this.element<HTMLElement>('[data-role=canvas]');
    host.innerHTML = '';
    const layout = this.state.current();
    if (!layout) {
      const empty = this.doc.createElement('p');
      empty.className = 'canvas-empty';
      empty.textContent = 'canvas is empty';
      host.appendChild(empty);
      return;
    }
    const frame = renderLayout(this.doc, layout, this.meta.bins, this.meta.categories);
    frame.classList.add('editable');
    frame.addEventListener('mousedown', (event) => this.onDragStart(event));
    frame.addEventListener('mousemove', (event) => this.onDragMove(event));
    frame.addEventListener('mouseup', (event) => this.onDragEnd(event));
    host.appendChild(frame);
  }

  private binFromPixels(px: number, frameSize: number): number {
    return Math.round((px / Math.max(frameSize, 1)) * this.meta.bins);
  }

  private onDragStart(event: MouseEvent): void {
    const target = event.target as HTMLElement;
    const box = target.closest('.layout-box') as HTMLElement | null;
    if (!box || box.dataset.index === undefined) return;
    this.dragging = {
      index: Number(box.dataset.index),
      startX: event.clientX,
      startY: event.clientY,
      moved: false,
    };
    this.state.select(this.dragging.index);
  }

  private onDragMove(event: MouseEvent): void {
    if (this.dragging) this.dragging.moved = true;
  }

  private onDragEnd(event: MouseEvent): void {
    if (!this.dragging) return;
    const frame = this.element<HTMLElement>('[data-role=canvas] .layout-frame');
    const rect = frame.getBoundingClientRect();
    const dxBins = this.binFromPixels(event.clientX - this.dragging.startX, rect.width);
    const dyBins = this.binFromPixels(event.clientY - this.dragging.startY, rect.height);
    if (dxBins !== 0 || dyBins !== 0) {
      this.state.moveElement(this.dragging.index, dxBins, dyBins);
      this.renderCanvas();
    }
    this.dragging = null;
  }

  /** Programmatic drag in bin units; the mouse path lands here anyway. */
  dragElementByBins(index: number, dxBins: number, dyBins: number): void {
    this.state.moveElement(index, dxBins, dyBins);
    this.renderCanvas();
  }

  private guard(action: () => void): void {
    try {
      action();
      this.showError(null);
    } catch (error) {
      this.showError(error);
    }
  }
}
