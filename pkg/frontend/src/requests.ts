// Builders turning panel inputs into the exact request bodies the service
// expects. Validation here mirrors the server's rules so mistakes surface
// before a round trip.

import type { GenerateRequest, LayoutWire, RelationshipWire, SamplerOptions, TaskName } from './types.js';
import { RELATIONS } from './types.js';

export interface TypeRow {
  category: string;
  w?: number;
  h?: number;
}

function withSampler(body: GenerateRequest, options: SamplerOptions): GenerateRequest {
  const merged: GenerateRequest = { ...body };
  if (options.n !== undefined) merged.n = options.n;
  if (options.seed !== undefined) merged.seed = options.seed;
  if (options.use_fsm !== undefined) merged.use_fsm = options.use_fsm;
  if (options.strategy !== undefined) merged.strategy = options.strategy;
  if (options.k !== undefined) merged.k = options.k;
  if (options.temperature !== undefined) merged.temperature = options.temperature;
  return merged;
}

export function buildRequest(
  task: TaskName,
  rows: TypeRow[],
  relationships: RelationshipWire[],
  canvasLayout: LayoutWire | null,
  options: SamplerOptions,
): GenerateRequest {
  switch (task) {
    case 'ugen':
      return withSampler({}, options);
    case 'gen-t': {
      if (!rows.length) throw new Error('add at least one element type');
      return withSampler({ types: rows.map((r) => r.category) }, options);
    }
    case 'gen-ts': {
      if (!rows.length) throw new Error('add at least one element type');
      const sizes = rows.map((r): [number, number] => {
        if (r.w === undefined || r.h === undefined) {
          throw new Error(`type ${r.category} needs both width and height bins`);
        }
        return [r.w, r.h];
      });
      return withSampler({ types: rows.map((r) => r.category), sizes }, options);
    }
    case 'gen-r': {
      if (rows.length < 2) throw new Error('relationships need at least two types');
      for (const rel of relationships) {
        if (!RELATIONS.includes(rel.relation as (typeof RELATIONS)[number])) {
          throw new Error(`unknown relation ${rel.relation}`);
        }
        if (rel.a === rel.b || rel.a >= rows.length || rel.b >= rows.length) {
          throw new Error('relationship endpoints must name two distinct type rows');
        }
      }
      return withSampler(
        { types: rows.map((r) => r.category), relationships },
        options,
      );
    }
    case 'refinement': {
      if (!canvasLayout) throw new Error('put a layout on the canvas first');
      return withSampler({ draft: canvasLayout }, options);
    }
    case 'completion': {
      if (!canvasLayout) throw new Error('place a seed element first');
      return withSampler({ partial: canvasLayout }, options);
    }
  }
}
