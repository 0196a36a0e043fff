import { describe, expect, it } from 'vitest'

import { BoxDrawTool, clientToImage, normalizeBox, type CanvasGeometry } from '../src/draw'

// canvas displayed at 2x scale with an offset
const GEO: CanvasGeometry = {
  left: 100,
  top: 50,
  width: 320,
  height: 240,
  imageWidth: 160,
  imageHeight: 120,
}

describe('clientToImage', () => {
  it('inverts the canvas scaling', () => {
    expect(clientToImage(GEO, 100, 50)).toEqual({ x: 0, y: 0 })
    expect(clientToImage(GEO, 100 + 2 * 40, 50 + 2 * 30)).toEqual({ x: 40, y: 30 })
  })

  it('clamps outside pointers to the frame', () => {
    expect(clientToImage(GEO, 0, 0)).toEqual({ x: 0, y: 0 })
    expect(clientToImage(GEO, 10_000, 10_000)).toEqual({ x: 159, y: 119 })
  })
})

describe('normalizeBox', () => {
  it('orders corners regardless of drag direction', () => {
    const box = normalizeBox({ x: 30, y: 40 }, { x: 10, y: 20 })
    expect(box).toEqual({ xMin: 10, yMin: 20, xMax: 30, yMax: 40 })
  })
})

describe('BoxDrawTool', () => {
  it('collects boxes in image pixels and gates submission on count', () => {
    const tool = new BoxDrawTool(2, GEO)
    expect(tool.canSubmit).toBe(false)

    tool.pointerDown(120, 70)
    tool.pointerMove(160, 110)
    tool.pointerUp(160, 110)
    expect(tool.boxes.length).toBe(1)
    expect(tool.canSubmit).toBe(false)

    tool.pointerDown(300, 200)
    tool.pointerUp(340, 240)
    expect(tool.canSubmit).toBe(true)
    expect(tool.payload()).toEqual([
      [10, 10, 30, 30],
      [100, 75, 120, 95],
    ])
  })

  it('boxes released outside the frame are clipped by construction', () => {
    const tool = new BoxDrawTool(1, GEO)
    tool.pointerDown(400, 280)
    tool.pointerUp(10_000, 10_000)
    expect(tool.boxes[0]).toEqual({ xMin: 150, yMin: 115, xMax: 159, yMax: 119 })
  })

  it('ignores extra boxes beyond the required count', () => {
    const tool = new BoxDrawTool(1, GEO)
    tool.pointerDown(120, 70)
    tool.pointerUp(140, 90)
    tool.pointerDown(200, 100)
    tool.pointerUp(220, 120)
    expect(tool.boxes.length).toBe(1)
  })

  it('removing a box re-disables submit', () => {
    const tool = new BoxDrawTool(1, GEO)
    tool.pointerDown(120, 70)
    tool.pointerUp(140, 90)
    expect(tool.canSubmit).toBe(true)
    tool.removeBox(0)
    expect(tool.canSubmit).toBe(false)
  })
})
