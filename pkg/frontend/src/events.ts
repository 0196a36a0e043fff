import type { JournalEvent } from './types'

// Minimal structural WebSocket so the browser global and the node 'ws'
// client are interchangeable in tests.
export interface WsLike {
  onmessage: ((event: { data: unknown }) => void) | null
  onclose: (() => void) | null
  onerror: ((err: unknown) => void) | null
  close(): void
}

export type WsFactory = (url: string) => WsLike

export interface EventStreamOptions {
  wsFactory?: WsFactory
  reconnectDelayMs?: number
  startCursor?: number
}

/**
 * Ordered journal-event stream with client-side cursor. On every
 * (re)connect the cursor is sent to the server, so events are delivered
 * exactly once per connection and unresolved conflicts replay after a
 * drop.
 */
export class EventStream {
  cursor: number
  private ws: WsLike | null = null
  private closed = false
  private listeners: Array<(e: JournalEvent) => void> = []
  private endListeners: Array<() => void> = []
  private readonly factory: WsFactory
  private readonly delayMs: number

  constructor(
    private wsBaseUrl: string,
    private sessionId: string,
    options: EventStreamOptions = {},
  ) {
    this.cursor = options.startCursor ?? 0
    this.delayMs = options.reconnectDelayMs ?? 500
    this.factory =
      options.wsFactory ??
      ((url: string) => new WebSocket(url) as unknown as WsLike)
  }

  onEvent(listener: (e: JournalEvent) => void): void {
    this.listeners.push(listener)
  }

  onEnd(listener: () => void): void {
    this.endListeners.push(listener)
  }

  connect(): void {
    if (this.closed) return
    const url = `${this.wsBaseUrl}/api/sessions/${this.sessionId}/events?cursor=${this.cursor}`
    const ws = this.factory(url)
    this.ws = ws
    ws.onmessage = (msg) => {
      const event = JSON.parse(String(msg.data)) as JournalEvent
      if (event.event === 'stream_end') {
        this.close()
        for (const l of this.endListeners) l()
        return
      }
      this.cursor = event.seq + 1
      for (const l of this.listeners) l(event)
    }
    ws.onerror = () => {
      /* close handler drives the retry */
    }
    ws.onclose = () => {
      if (!this.closed) {
        setTimeout(() => this.connect(), this.delayMs)
      }
    }
  }

  close(): void {
    this.closed = true
    if (this.ws) {
      const ws = this.ws
      ws.onclose = null
      ws.close()
      this.ws = null
    }
  }
}
