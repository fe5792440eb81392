// Thin typed client for the layout service. Every studio interaction with
// the model goes through these documented endpoints and nothing else.

import type { GenerateRequest, GenerateResponse, Meta, TaskName } from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  /** Requests issued so far; lets tests assert the UI never bypasses the API. */
  readonly requestLog: { method: string; path: string }[] = [];

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.requestLog.push({ method, path });
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail = payload as { error?: string; field?: string };
      throw new ApiError(response.status, detail.error ?? response.statusText, detail.field);
    }
    return payload as T;
  }

  meta(): Promise<Meta> {
    return this.request<Meta>('GET', '/meta');
  }

  generate(task: TaskName, body: GenerateRequest): Promise<GenerateResponse> {
    if (task === 'refinement') return this.request('POST', '/refine', body);
    if (task === 'completion') return this.request('POST', '/complete', body);
    return this.request('POST', `/generate/${task}`, body);
  }
}
