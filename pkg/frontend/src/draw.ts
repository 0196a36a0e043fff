import type { Box, BoxTuple } from './types'
import { toTuple } from './types'

export interface CanvasGeometry {
  // displayed canvas rectangle in client coordinates
  left: number
  top: number
  width: number
  height: number
  // image pixel dimensions
  imageWidth: number
  imageHeight: number
}

/** Client (pointer) coordinates to integer image pixels, clamped to the
 * frame. Inverse of whatever scaling the canvas applies. */
export function clientToImage(
  geometry: CanvasGeometry,
  clientX: number,
  clientY: number,
): { x: number; y: number } {
  const fx = ((clientX - geometry.left) * geometry.imageWidth) / geometry.width
  const fy = ((clientY - geometry.top) * geometry.imageHeight) / geometry.height
  const x = Math.min(geometry.imageWidth - 1, Math.max(0, Math.floor(fx)))
  const y = Math.min(geometry.imageHeight - 1, Math.max(0, Math.floor(fy)))
  return { x, y }
}

export function normalizeBox(
  a: { x: number; y: number },
  b: { x: number; y: number },
): Box {
  return {
    xMin: Math.min(a.x, b.x),
    yMin: Math.min(a.y, b.y),
    xMax: Math.max(a.x, b.x),
    yMax: Math.max(a.y, b.y),
  }
}

/**
 * Collects exactly `requiredCount` boxes drawn by the annotator. Boxes are
 * kept in image pixel coordinates and always clipped to the frame; submit
 * stays disabled until the count is right.
 */
export class BoxDrawTool {
  boxes: Box[] = []
  private start: { x: number; y: number } | null = null
  current: Box | null = null

  constructor(
    public requiredCount: number,
    private geometry: CanvasGeometry,
  ) {}

  get canSubmit(): boolean {
    return this.boxes.length === this.requiredCount
  }

  pointerDown(clientX: number, clientY: number): void {
    if (this.boxes.length >= this.requiredCount) return
    this.start = clientToImage(this.geometry, clientX, clientY)
    this.current = normalizeBox(this.start, this.start)
  }

  pointerMove(clientX: number, clientY: number): void {
    if (!this.start) return
    this.current = normalizeBox(this.start, clientToImage(this.geometry, clientX, clientY))
  }

  /** Finish the box on pointer release; zero-size boxes count as a single
   * pixel, everything is already in-bounds by construction. */
  pointerUp(clientX: number, clientY: number): Box | null {
    if (!this.start) return null
    const box = normalizeBox(this.start, clientToImage(this.geometry, clientX, clientY))
    this.start = null
    this.current = null
    this.boxes.push(box)
    return box
  }

  removeBox(index: number): void {
    this.boxes.splice(index, 1)
  }

  reset(): void {
    this.boxes = []
    this.start = null
    this.current = null
  }

  payload(): BoxTuple[] {
    return this.boxes.map(toTuple)
  }
}
