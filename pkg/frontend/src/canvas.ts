import { rleDecode } from './rle'
import type { FrameAssets } from './types'
import type { OverlayToggles } from './view'

// Okabe-Ito palette: colorblind-safe, stable per instance id.
export const PALETTE: Array<[number, number, number]> = [
  [230, 159, 0],
  [86, 180, 233],
  [0, 158, 115],
  [240, 228, 66],
  [0, 114, 178],
  [213, 94, 0],
  [204, 121, 167],
  [153, 153, 153],
]

export function instanceColor(instanceId: number): [number, number, number] {
  return PALETTE[instanceId % PALETTE.length]
}

export function maskToImageData(
  rle: number[],
  width: number,
  height: number,
  color: [number, number, number],
  alpha = 110,
): Uint8ClampedArray<ArrayBuffer> {
  const bits = rleDecode(rle, width, height)
  const rgba = new Uint8ClampedArray(new ArrayBuffer(width * height * 4))
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const o = i * 4
      rgba[o] = color[0]
      rgba[o + 1] = color[1]
      rgba[o + 2] = color[2]
      rgba[o + 3] = alpha
    }
  }
  return rgba
}

/** Composite the frame image, mask overlays, and boxes onto a canvas.
 * Browser-only; all the decodable logic lives in pure helpers above. */
export function renderFrame(
  canvas: HTMLCanvasElement,
  image: HTMLImageElement | null,
  assets: FrameAssets,
  toggles: OverlayToggles,
): void {
  const ctx = canvas.getContext('2d')
  if (!ctx) return
  canvas.width = assets.width
  canvas.height = assets.height
  ctx.clearRect(0, 0, canvas.width, canvas.height)
  if (image) {
    ctx.drawImage(image, 0, 0, assets.width, assets.height)
  } else {
    ctx.fillStyle = '#222'
    ctx.fillRect(0, 0, canvas.width, canvas.height)
  }
  if (toggles.masks) {
    for (const mask of assets.masks) {
      const rgba = maskToImageData(
        mask.rle,
        assets.width,
        assets.height,
        instanceColor(mask.instance_id),
      )
      const overlay = new ImageData(rgba, assets.width, assets.height)
      const off = document.createElement('canvas')
      off.width = assets.width
      off.height = assets.height
      off.getContext('2d')?.putImageData(overlay, 0, 0)
      ctx.drawImage(off, 0, 0)
    }
  }
  if (toggles.boxes) {
    for (const mask of assets.masks) {
      const [r, g, b] = instanceColor(mask.instance_id)
      const [x0, y0, x1, y1] = mask.bbox
      ctx.strokeStyle = `rgb(${r},${g},${b})`
      ctx.lineWidth = 1
      ctx.strokeRect(x0 + 0.5, y0 + 0.5, x1 - x0 + 1, y1 - y0 + 1)
    }
  }
}
