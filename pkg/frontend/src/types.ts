export interface Box {
  xMin: number
  yMin: number
  xMax: number
  yMax: number
}

export type BoxTuple = [number, number, number, number]

export function toTuple(b: Box): BoxTuple {
  return [b.xMin, b.yMin, b.xMax, b.yMax]
}

export interface MaskPayload {
  instance_id: number
  source: string
  rle: number[]
  area: number
  bbox: BoxTuple
}

export interface FrameAssets {
  frame: number
  name: string
  width: number
  height: number
  verdict: { outcome: string }
  masks: MaskPayload[]
  prompt_boxes_next: BoxTuple[]
  image_b64?: string
}

export interface SessionInfo {
  session_id: string
  manifest: string
  status: string
  frames_total: number
  frames_done: number
  recovered_frames: number
  manual_frames: number
  expected_count: number
  conflict?: ConflictInfo
}

export interface ConflictInfo {
  frame: number
  verdict: Record<string, unknown>
  required_count: number
}

export interface JournalEvent {
  seq: number
  event: string
  frame?: number
  verdict?: Record<string, unknown>
  required_count?: number
  [key: string]: unknown
}
