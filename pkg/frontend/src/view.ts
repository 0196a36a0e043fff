import type { ConflictInfo, JournalEvent } from './types'

export interface InboxEntry {
  frame: number
  verdict: Record<string, unknown>
  requiredCount: number
  seq: number
}

export interface OverlayToggles {
  masks: boolean
  boxes: boolean
  verdicts: boolean
}

export interface ParamPanel {
  alpha: number
  beta: number
  marginFraction: number
}

/**
 * Pure client-side session state. Journal events are folded in strictly in
 * order, so the conflict inbox always mirrors the server's event sequence:
 * a conflict enters the queue when its event arrives and leaves when the
 * matching frame is finally accepted.
 */
export class ViewState {
  sessionId: string
  currentFrame = 0
  framesDone = 0
  status = 'running'
  expectedCount = 0
  lastSeq = -1
  inbox: InboxEntry[] = []
  toggles: OverlayToggles = { masks: true, boxes: true, verdicts: true }
  params: ParamPanel = { alpha: 0.1, beta: 0.9, marginFraction: 0.1 }

  constructor(sessionId: string) {
    this.sessionId = sessionId
  }

  get pendingConflict(): InboxEntry | null {
    return this.inbox.length ? this.inbox[0] : null
  }

  get conflictCount(): number {
    return this.inbox.length
  }

  /** Drawing replacement boxes is only allowed while blocked on a conflict. */
  get drawingEnabled(): boolean {
    return this.status === 'needs_manual' && this.inbox.length > 0
  }

  applyEvent(event: JournalEvent): void {
    if (event.seq <= this.lastSeq) return // duplicate delivery guard
    this.lastSeq = event.seq
    switch (event.event) {
      case 'session_started': {
        const manifest = event.manifest as { expected_count?: number } | undefined
        if (manifest?.expected_count) this.expectedCount = manifest.expected_count
        const params = event.params as
          | { alpha?: number; beta?: number; margin_fraction?: number }
          | undefined
        if (params) {
          this.params = {
            alpha: params.alpha ?? this.params.alpha,
            beta: params.beta ?? this.params.beta,
            marginFraction: params.margin_fraction ?? this.params.marginFraction,
          }
        }
        break
      }
      case 'frame_accepted': {
        const frame = event.frame ?? 0
        this.framesDone = Math.max(this.framesDone, frame + 1)
        this.currentFrame = frame
        this.inbox = this.inbox.filter((c) => c.frame !== frame)
        if (this.status === 'needs_manual' && this.inbox.length === 0) {
          this.status = 'running'
        }
        break
      }
      case 'conflict': {
        const frame = event.frame ?? 0
        this.status = 'needs_manual'
        this.currentFrame = frame
        if (!this.inbox.some((c) => c.frame === frame && c.seq === event.seq)) {
          this.inbox.push({
            frame,
            verdict: (event.verdict as Record<string, unknown>) ?? {},
            requiredCount: (event.required_count as number) ?? this.expectedCount,
            seq: event.seq,
          })
          this.inbox.sort((a, b) => a.seq - b.seq)
        }
        break
      }
      case 'completed': {
        this.status = 'completed'
        break
      }
      default:
        break // backend_call, manual_prompts, snapshot need no view change
    }
  }

  applyConflictInfo(info: ConflictInfo, seq: number): void {
    this.applyEvent({
      seq,
      event: 'conflict',
      frame: info.frame,
      verdict: info.verdict,
      required_count: info.required_count,
    })
  }
}

export function verdictText(verdict: Record<string, unknown>): string {
  const outcome = String(verdict.outcome ?? 'unknown')
  switch (outcome) {
    case 'fail_size':
      return `size check failed for instance ${verdict.instance_id}: area ${verdict.area} outside [${(verdict.allowed as number[])?.map((v) => v.toFixed(1)).join(', ')}]`
    case 'fail_overlap':
      return `overlap check failed for pair ${(verdict.pair as number[])?.join(' & ')}: IoU ${(verdict.iou as number)?.toFixed(3)}`
    case 'fail_association':
      return `association failed for instances ${(verdict.unmatched_ids as number[])?.join(', ')}`
    case 'pass':
      return 'passed'
    default:
      return outcome
  }
}
