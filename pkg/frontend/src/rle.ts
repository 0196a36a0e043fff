// Run-length mask codec matching the service wire format: row-major runs
// alternating zero/one, zero run first; run sum must equal width*height.

export function rleDecode(runs: number[], width: number, height: number): Uint8Array {
  const total = runs.reduce((a, b) => a + b, 0)
  if (total !== width * height) {
    throw new Error(`run sum ${total} does not match ${width}x${height}`)
  }
  const out = new Uint8Array(width * height)
  let pos = 0
  let value = 0
  for (const run of runs) {
    if (run < 0) throw new Error('negative run length')
    if (value === 1) out.fill(1, pos, pos + run)
    pos += run
    value = 1 - value
  }
  return out
}

export function rleEncode(bits: Uint8Array): number[] {
  if (bits.length === 0) return [0]
  const runs: number[] = []
  let current = 0
  let run = 0
  for (const bit of bits) {
    const v = bit ? 1 : 0
    if (v === current) {
      run += 1
    } else {
      runs.push(run)
      current = v
      run = 1
    }
  }
  runs.push(run)
  return runs
}

export function maskArea(bits: Uint8Array): number {
  let area = 0
  for (const bit of bits) area += bit
  return area
}
