import { streamMessages } from './sse';
import type { ExplanationMsg, SessionInfo, SessionRequest, StreamMsg } from './types';

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return body.detail ?? JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

/** Thin client for the rating server's HTTP API. */
export class ApiClient {
  constructor(readonly baseUrl: string = '') {}

  async startSession(request: SessionRequest): Promise<SessionInfo> {
    const response = await fetch(`${this.baseUrl}/api/session`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      throw new ApiError(await errorDetail(response), response.status);
    }
    return (await response.json()) as SessionInfo;
  }

  async *streamTiles(sessionId: string, count: number): AsyncGenerator<StreamMsg> {
    const response = await fetch(
      `${this.baseUrl}/api/session/${sessionId}/tiles?count=${count}`,
    );
    if (!response.ok || !response.body) {
      throw new ApiError(await errorDetail(response), response.status);
    }
    yield* streamMessages(response.body);
  }

  async explain(sessionId: string, i: number, j: number): Promise<ExplanationMsg> {
    const response = await fetch(`${this.baseUrl}/api/session/${sessionId}/explain`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ i, j }),
    });
    if (!response.ok) {
      throw new ApiError(await errorDetail(response), response.status);
    }
    return (await response.json()) as ExplanationMsg;
  }

  exportUrl(sessionId: string): string {
    return `${this.baseUrl}/api/session/${sessionId}/export.geojson`;
  }
}
