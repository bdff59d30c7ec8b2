// Typed client for the annotation service. The UI talks to the service
// exclusively; it never reads files or computes statistics itself.

import type {
  Flags,
  ReliabilityReport,
  SessionSummary,
  UtteranceView,
} from './types'

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message)
  }
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response
    try {
      resp = await this.fetchFn(this.baseUrl + path, init)
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`)
    }
    if (!resp.ok) {
      let detail = resp.statusText
      try {
        const body = await resp.json()
        if (body && typeof body.error === 'string') detail = body.error
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(detail, resp.status)
    }
    return resp.json() as Promise<T>
  }

  health(): Promise<{ status: string; n_utterances: number }> {
    return this.request('/health')
  }

  sessions(): Promise<SessionSummary[]> {
    return this.request('/sessions')
  }

  utterances(sessionId: string): Promise<UtteranceView[]> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/utterances`)
  }

  // Utterance ids contain '#', so the path segment must be encoded.
  putCodes(utteranceId: string, coder: string, flags: Flags): Promise<unknown> {
    const path =
      `/utterances/${encodeURIComponent(utteranceId)}/codes` +
      `?coder=${encodeURIComponent(coder)}`
    return this.request(path, {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(flags),
    })
  }

  reliability(): Promise<ReliabilityReport> {
    return this.request('/reliability')
  }

  async exportCsv(): Promise<string> {
    let resp: Response
    try {
      resp = await this.fetchFn(this.baseUrl + '/export')
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`)
    }
    if (!resp.ok) throw new ApiError(resp.statusText, resp.status)
    return resp.text()
  }
}
