import { ApiClient } from './api'
import { renderFrame } from './canvas'
import { BoxDrawTool, type CanvasGeometry } from './draw'
import { EventStream } from './events'
import type { BoxTuple, FrameAssets } from './types'
import { ViewState, verdictText } from './view'

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing #${id}`)
  return el as T
}

const api = new ApiClient('')
const wsBase = `${location.protocol === 'https:' ? 'wss' : 'ws'}://${location.host}`

let view: ViewState | null = null
let stream: EventStream | null = null
let drawTool: BoxDrawTool | null = null
let latestAssets: FrameAssets | null = null

const canvas = $('frame-canvas') as unknown as HTMLCanvasElement
const statusEl = $('status')
const inboxEl = $('inbox')
const badgeEl = $('conflict-badge')
const submitBtn = $('submit-boxes') as unknown as HTMLButtonElement
const frameLabel = $('frame-label')

function geometry(): CanvasGeometry {
  const rect = canvas.getBoundingClientRect()
  return {
    left: rect.left,
    top: rect.top,
    width: rect.width,
    height: rect.height,
    imageWidth: latestAssets?.width ?? canvas.width,
    imageHeight: latestAssets?.height ?? canvas.height,
  }
}

function toggles() {
  return {
    masks: ($('toggle-masks') as unknown as HTMLInputElement).checked,
    boxes: ($('toggle-boxes') as unknown as HTMLInputElement).checked,
    verdicts: ($('toggle-verdicts') as unknown as HTMLInputElement).checked,
  }
}

async function refreshFrame(frame: number): Promise<void> {
  if (!view) return
  try {
    latestAssets = await api.frameAssets(view.sessionId, frame)
  } catch {
    return // frame not processed yet
  }
  frameLabel.textContent = `frame ${latestAssets.frame} (${latestAssets.name})`
  let image: HTMLImageElement | null = null
  if (latestAssets.image_b64) {
    image = new Image()
    image.src = `data:image/png;base64,${latestAssets.image_b64}`
    await image.decode()
  }
  renderFrame(canvas, image, latestAssets, toggles())
  if (toggles().verdicts) {
    $('verdict-line').textContent = verdictText(latestAssets.verdict)
  }
}

function renderInbox(): void {
  if (!view) return
  badgeEl.textContent = String(view.conflictCount)
  inboxEl.innerHTML = ''
  for (const entry of view.inbox) {
    const li = document.createElement('li')
    li.textContent = `frame ${entry.frame}: ${verdictText(entry.verdict)} (draw ${entry.requiredCount} boxes)`
    inboxEl.appendChild(li)
  }
  const conflict = view.pendingConflict
  if (conflict && view.drawingEnabled) {
    if (!drawTool || drawTool.requiredCount !== conflict.requiredCount) {
      drawTool = new BoxDrawTool(conflict.requiredCount, geometry())
    }
    submitBtn.disabled = !drawTool.canSubmit
  } else {
    drawTool = null
    submitBtn.disabled = true
  }
}

function updateStatus(): void {
  if (!view) return
  statusEl.textContent = `${view.status} — ${view.framesDone} frames done`
  renderInbox()
}

canvas.addEventListener('pointerdown', (e) => drawTool?.pointerDown(e.clientX, e.clientY))
canvas.addEventListener('pointermove', (e) => drawTool?.pointerMove(e.clientX, e.clientY))
canvas.addEventListener('pointerup', (e) => {
  if (!drawTool) return
  drawTool.pointerUp(e.clientX, e.clientY)
  submitBtn.disabled = !drawTool.canSubmit
})

submitBtn.addEventListener('click', async () => {
  if (!view || !drawTool || !drawTool.canSubmit) return
  const conflict = view.pendingConflict
  if (!conflict) return
  await api.postPrompts(view.sessionId, conflict.frame, drawTool.payload())
  drawTool.reset()
  await api.run(view.sessionId, 'auto')
})

$('create-session').addEventListener('click', async () => {
  const manifest = ($('manifest-name') as unknown as HTMLInputElement).value
  const promptText = ($('initial-prompts') as unknown as HTMLTextAreaElement).value
  const prompts = JSON.parse(promptText) as BoxTuple[]
  const { session_id } = await api.createSession(manifest, prompts)
  view = new ViewState(session_id)
  stream?.close()
  stream = new EventStream(wsBase, session_id)
  stream.onEvent((event) => {
    view?.applyEvent(event)
    updateStatus()
    if (event.event === 'frame_accepted' && typeof event.frame === 'number') {
      void refreshFrame(event.frame)
    }
  })
  stream.connect()
  void api.run(session_id, 'auto')
  $('export-mot').setAttribute('href', api.exportUrl(session_id, 'mot'))
  $('export-yolo').setAttribute('href', api.exportUrl(session_id, 'yolo'))
  updateStatus()
})

for (const id of ['toggle-masks', 'toggle-boxes', 'toggle-verdicts']) {
  $(id).addEventListener('change', () => {
    if (view) void refreshFrame(view.currentFrame)
  })
}
