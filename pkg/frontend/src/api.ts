import type { BoxTuple, FrameAssets, SessionInfo } from './types'

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message)
  }
}

async function readBody(resp: Response): Promise<unknown> {
  const text = await resp.text()
  try {
    return JSON.parse(text)
  } catch {
    return text
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    })
    const data = await readBody(resp)
    if (!resp.ok) {
      const detail =
        typeof data === 'object' && data !== null && 'detail' in data
          ? String((data as { detail: unknown }).detail)
          : String(data)
      throw new ApiError(resp.status, detail)
    }
    return data as T
  }

  createSession(manifest: string, initialPrompts: BoxTuple[], clientToken?: string) {
    return this.request<{ session_id: string; created: boolean }>('POST', '/api/sessions', {
      manifest,
      initial_prompts: initialPrompts,
      client_token: clientToken,
    })
  }

  sessionInfo(id: string) {
    return this.request<SessionInfo>('GET', `/api/sessions/${id}`)
  }

  run(id: string, mode: 'step' | 'auto') {
    return this.request<SessionInfo>('POST', `/api/sessions/${id}/run`, { mode })
  }

  postPrompts(id: string, frame: number, boxes: BoxTuple[]) {
    return this.request<SessionInfo>('POST', `/api/sessions/${id}/prompts`, { frame, boxes })
  }

  frameAssets(id: string, frame: number) {
    return this.request<FrameAssets>('GET', `/api/sessions/${id}/frames/${frame}`)
  }

  exportUrl(id: string, format: 'mot' | 'yolo'): string {
    return `${this.baseUrl}/api/sessions/${id}/export?format=${format}`
  }

  async downloadExport(id: string, format: 'mot' | 'yolo'): Promise<ArrayBuffer> {
    const resp = await this.fetchFn(this.exportUrl(id, format))
    if (!resp.ok) throw new ApiError(resp.status, 'export failed')
    return resp.arrayBuffer()
  }
}
