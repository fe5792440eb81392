// Wire types mirroring the service's JSON contract. All geometry is in
// quantized bins; the studio owns presentation scaling.

export interface ElementWire {
  category: string;
  bbox: [number, number, number, number]; // x, y, w, h in bins
}

export interface LayoutWire {
  canvas?: { w: number; h: number };
  elements: ElementWire[];
}

export interface Meta {
  snapshot_id: string;
  categories: string[];
  background: string[];
  bins: number;
  max_elements: number;
  multi_task: boolean;
  model: Record<string, unknown>;
  tasks: string[];
}

export interface RelationshipWire {
  a: number;
  b: number;
  relation: string;
}

export interface SamplerOptions {
  n?: number;
  seed?: number;
  use_fsm?: boolean;
  strategy?: 'greedy' | 'top_k';
  k?: number;
  temperature?: number;
}

export interface GenerateRequest extends SamplerOptions {
  types?: string[];
  sizes?: [number, number][];
  relationships?: RelationshipWire[];
  draft?: LayoutWire;
  partial?: LayoutWire;
}

export interface SampleFlag {
  flagged: boolean;
  violations: string[];
  error: string | null;
}

export interface GenerateResponse {
  snapshot_id: string;
  seed: number;
  layouts: (LayoutWire | null)[];
  flags: SampleFlag[];
}

export const RELATIONS = [
  'smaller',
  'larger',
  'equal',
  'above',
  'bottom',
  'left',
  'right',
  'overlap',
] as const;

export type TaskName = 'ugen' | 'gen-t' | 'gen-ts' | 'gen-r' | 'refinement' | 'completion';
