"""The annotation session state machine.

Each step segments the current frame from the pending prompts, cleans the
masks, and validates them against the previous frame. Masks from manual or
initial prompts are trusted and skip validation. A failed validation gets
exactly one automatic recovery from grid-sampled prompts; if that also
fails the session blocks on a conflict until a human submits replacement
boxes. Accepted masks become inflated box prompts for the next frame.
"""

from __future__ import annotations

import enum
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .backends import SegmentationBackend, ReplayBackend, TranscriptEntry
from .consistency import (
    ConsistencyParams,
    FrameContext,
    SizeAnchor,
    Verdict,
    VerdictOutcome,
    validate,
)
from .density import DensityParams, remove_outliers
from .errors import EngineStateError, JournalError
from .geometry import (
    BBox,
    BinaryMask,
    InstanceMask,
    MaskSource,
    inflate_bbox,
    mask_iou,
    mask_to_bbox,
    rle_decode,
    rle_encode,
)
from .journal import Journal, read_journal
from .manifest import FrameManifest
from .mot import MotRecord, format_line
from .protocol import BoxPrompt, FrameRef, GridSpec, MaskResult


class SessionStatus(str, enum.Enum):
    AWAITING_INIT = "awaiting_init"
    RUNNING = "running"
    NEEDS_MANUAL = "needs_manual"
    COMPLETED = "completed"


class StepOutcome(str, enum.Enum):
    ADVANCED = "advanced"
    RECOVERY_ADVANCED = "recovery_advanced"
    NEEDS_MANUAL = "needs_manual"
    COMPLETED = "completed"


@dataclass(frozen=True)
class EngineParams:
    consistency: ConsistencyParams = field(default_factory=ConsistencyParams)
    density: DensityParams = field(default_factory=DensityParams)
    margin_fraction: float = 0.1
    grid: GridSpec = field(default_factory=GridSpec)
    recovery_enabled: bool = True
    validation_enabled: bool = True
    snapshot_interval: int = 50

    def to_dict(self) -> dict:
        return {
            "alpha": self.consistency.alpha,
            "beta": self.consistency.beta,
            "min_match_iou": self.consistency.min_match_iou,
            "size_anchor": self.consistency.size_anchor.value,
            "percentile": self.density.percentile,
            "dilation_kernel": self.density.dilation_kernel,
            "dilation_iterations": self.density.dilation_iterations,
            "min_points": self.density.min_points,
            "bandwidth_floor": self.density.bandwidth_floor,
            "margin_fraction": self.margin_fraction,
            "grid_nx": self.grid.nx,
            "grid_ny": self.grid.ny,
            "recovery_enabled": self.recovery_enabled,
            "validation_enabled": self.validation_enabled,
            "snapshot_interval": self.snapshot_interval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineParams":
        return cls(
            consistency=ConsistencyParams(
                alpha=d.get("alpha", 0.1),
                beta=d.get("beta", 0.9),
                min_match_iou=d.get("min_match_iou", 0.0),
                size_anchor=SizeAnchor(d.get("size_anchor", "last_manual")),
            ),
            density=DensityParams(
                percentile=d.get("percentile", 20.0),
                dilation_kernel=d.get("dilation_kernel", 3),
                dilation_iterations=d.get("dilation_iterations", 3),
                min_points=d.get("min_points", 3),
                bandwidth_floor=d.get("bandwidth_floor", 1.0),
            ),
            margin_fraction=d.get("margin_fraction", 0.1),
            grid=GridSpec(d.get("grid_nx", 32), d.get("grid_ny", 32)),
            recovery_enabled=d.get("recovery_enabled", True),
            validation_enabled=d.get("validation_enabled", True),
            snapshot_interval=d.get("snapshot_interval", 50),
        )


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    masks: tuple[InstanceMask, ...]  # sorted by instance id, length N
    prompt_boxes_next: tuple[BBox, ...]  # inflated; the next frame's prompts
    verdict: Verdict
    recovery_attempted: bool


@dataclass(frozen=True)
class ConflictEvent:
    session_id: str
    frame_index: int
    verdict: Verdict
    required_count: int


@dataclass
class PendingFrame:
    prompts: list[BBox]
    source: MaskSource
    recovery_attempted: bool = False


def _box_to_list(b: BBox) -> list[int]:
    return [b.x_min, b.y_min, b.x_max, b.y_max]


def _box_from_list(v: Sequence[int]) -> BBox:
    return BBox(int(v[0]), int(v[1]), int(v[2]), int(v[3]))


class Session:
    """One annotation run over a frame manifest. Steps are serialized by an
    internal lock; event listeners observe a totally ordered stream."""

    def __init__(
        self,
        manifest: FrameManifest,
        params: EngineParams,
        backend: SegmentationBackend,
        journal_path: str | Path,
        session_id: str | None = None,
    ):
        self.id = session_id or uuid.uuid4().hex
        self.manifest = manifest
        self.params = params
        self.backend = backend
        self.journal = Journal(journal_path)
        self.records: list[FrameRecord] = []
        self.cursor = 0
        self.status = SessionStatus.AWAITING_INIT
        self.pending: PendingFrame | None = None
        self.pending_conflict: ConflictEvent | None = None
        self.anchor_areas: dict[int, int] = {}
        self.recovered_frames = 0
        self.manual_frames = 0
        self._listeners: list[Callable[[dict], None]] = []
        self._lock = threading.RLock()

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def start(
        cls,
        manifest: FrameManifest,
        params: EngineParams,
        backend: SegmentationBackend,
        initial_prompts: Sequence[BBox],
        journal_path: str | Path,
        session_id: str | None = None,
    ) -> "Session":
        if len(initial_prompts) != manifest.expected_count:
            raise ValueError(
                f"expected {manifest.expected_count} initial prompts, "
                f"got {len(initial_prompts)}"
            )
        session = cls(manifest, params, backend, journal_path, session_id)
        session.journal.open_new()
        session.journal.append(
            {
                "event": "session_started",
                "session_id": session.id,
                "manifest": manifest.to_dict(),
                "params": params.to_dict(),
                "initial_prompts": [_box_to_list(b) for b in initial_prompts],
            }
        )
        session.pending = PendingFrame(list(initial_prompts), MaskSource.INITIAL)
        session.status = SessionStatus.RUNNING
        return session

    @classmethod
    def resume(
        cls,
        journal_path: str | Path,
        backend: SegmentationBackend,
        manifest_root: str | Path | None = None,
    ) -> "Session":
        """Rebuild session state by replaying the journal, then continue
        appending to the same file."""
        events = read_journal(journal_path)
        if not events or events[0].get("event") != "session_started":
            raise JournalError("journal does not begin with session_started")
        head = events[0]
        manifest = FrameManifest.from_dict(
            head["manifest"], root=Path(manifest_root) if manifest_root else None
        )
        params = EngineParams.from_dict(head["params"])
        session = cls(
            manifest, params, backend, journal_path, session_id=head["session_id"]
        )
        session.journal.open_append(events)
        session.pending = PendingFrame(
            [_box_from_list(b) for b in head["initial_prompts"]], MaskSource.INITIAL
        )
        session.status = SessionStatus.RUNNING
        for event in events[1:]:
            session._replay_event(event)
        return session

    def _replay_event(self, event: dict) -> None:
        kind = event["event"]
        if kind == "frame_accepted":
            record = self._record_from_event(event)
            self.records.append(record)
            for m in record.masks:
                if m.source in (MaskSource.INITIAL, MaskSource.MANUAL):
                    self.anchor_areas[m.instance_id] = m.mask.area
            if any(m.source is MaskSource.RECOVERY for m in record.masks):
                self.recovered_frames += 1
            if any(m.source is MaskSource.MANUAL for m in record.masks):
                self.manual_frames += 1
            self.cursor = record.frame_index + 1
            self.pending_conflict = None
            if self.cursor >= len(self.manifest):
                self.pending = None
            else:
                self.pending = PendingFrame(
                    list(record.prompt_boxes_next), MaskSource.MODEL
                )
            self.status = SessionStatus.RUNNING
        elif kind == "conflict":
            self.status = SessionStatus.NEEDS_MANUAL
            self.pending_conflict = ConflictEvent(
                session_id=self.id,
                frame_index=event["frame"],
                verdict=Verdict.from_dict(event["verdict"]),
                required_count=event["required_count"],
            )
            if self.pending:
                self.pending.recovery_attempted = True
        elif kind == "completed":
            self.status = SessionStatus.COMPLETED
        # backend_call, manual_prompts, snapshot need no state replay

    def _record_from_event(self, event: dict) -> FrameRecord:
        frame_index = event["frame"]
        masks = tuple(
            InstanceMask(
                mask=rle_decode(m["rle"], self.manifest.width, self.manifest.height),
                instance_id=i,
                frame_index=frame_index,
                source=MaskSource(m["source"]),
            )
            for i, m in enumerate(event["masks"])
        )
        return FrameRecord(
            frame_index=frame_index,
            masks=masks,
            prompt_boxes_next=tuple(
                _box_from_list(b) for b in event["prompt_boxes_next"]
            ),
            verdict=Verdict.from_dict(event["verdict"]),
            recovery_attempted=event["recovery_attempted"],
        )

    # -- events --------------------------------------------------------------

    def add_listener(self, listener: Callable[[dict], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def events_since(self, seq: int) -> list[dict]:
        with self._lock:
            return [e for e in self.journal.events if e["seq"] >= seq]

    def _emit(self, events: list[dict]) -> None:
        written = self.journal.append_all(events)
        for record in written:
            for listener in list(self._listeners):
                listener(record)

    # -- helpers ---------------------------------------------------------------

    @property
    def expected_count(self) -> int:
        return self.manifest.expected_count

    def _frame_ref(self, index: int) -> FrameRef:
        path = self.manifest.frame_path(index)
        return FrameRef(
            index=index,
            width=self.manifest.width,
            height=self.manifest.height,
            path=str(path) if path is not None else None,
        )

    def _backend_call_event(
        self, frame: int, kind: str, prompts: list, results: list[MaskResult]
    ) -> dict:
        if kind == "segment":
            prompt_payload = [_box_to_list(p.bbox) for p in prompts]
        else:
            prompt_payload = [[self.params.grid.nx, self.params.grid.ny]]
        return {
            "event": "backend_call",
            "frame": frame,
            "kind": kind,
            "prompts": prompt_payload,
            "masks": [
                {"rle": rle_encode(r.mask), "score": r.score} for r in results
            ],
        }

    def _clean(self, results: list[MaskResult]) -> list[BinaryMask]:
        return [remove_outliers(r.mask, self.params.density) for r in results]

    def _context(self) -> FrameContext:
        prev = self.records[-1]
        prev_masks = {m.instance_id: m.mask for m in prev.masks}
        if self.params.consistency.size_anchor is SizeAnchor.PREVIOUS_FRAME:
            anchors = {m.instance_id: m.mask.area for m in prev.masks}
        else:
            anchors = dict(self.anchor_areas)
        return FrameContext(prev_masks=prev_masks, anchor_areas=anchors)

    def _validate_masks(self, masks: list[InstanceMask]) -> Verdict:
        if not self.records:
            # nothing to compare against; only reachable for model-sourced
            # frame 0, which start() prevents
            return Verdict(VerdictOutcome.PASS)
        return validate(self._context(), masks, self.params.consistency)

    def _claim_recovery(
        self, candidates: list[MaskResult]
    ) -> list[BinaryMask] | None:
        """Per instance, the candidate with max IoU to its previous validated
        mask; fails (None) when any instance finds no positive overlap."""
        if not candidates or not self.records:
            return None
        prev = {m.instance_id: m.mask for m in self.records[-1].masks}
        chosen: list[BinaryMask] = []
        for instance_id in range(self.expected_count):
            best_iou, best = 0.0, None
            for cand in candidates:
                iou = mask_iou(cand.mask, prev[instance_id])
                if iou > best_iou:
                    best_iou, best = iou, cand.mask
            if best is None:
                return None
            chosen.append(best)
        return chosen

    def _accept(
        self,
        frame_index: int,
        masks: list[BinaryMask],
        source: MaskSource,
        verdict: Verdict,
        recovery_attempted: bool,
        events: list[dict],
    ) -> None:
        instance_masks = tuple(
            InstanceMask(mask=m, instance_id=i, frame_index=frame_index, source=source)
            for i, m in enumerate(masks)
        )
        for m in instance_masks:
            if m.mask.area == 0:
                raise EngineStateError(
                    f"accepted mask for instance {m.instance_id} is empty; "
                    "backend produced no usable pixels"
                )
        next_prompts = tuple(
            inflate_bbox(
                mask_to_bbox(m.mask),
                self.params.margin_fraction,
                self.manifest.width,
                self.manifest.height,
            )
            for m in instance_masks
        )
        record = FrameRecord(
            frame_index=frame_index,
            masks=instance_masks,
            prompt_boxes_next=next_prompts,
            verdict=verdict,
            recovery_attempted=recovery_attempted,
        )
        events.append(
            {
                "event": "frame_accepted",
                "frame": frame_index,
                "masks": [
                    {"rle": rle_encode(m.mask), "source": m.source.value}
                    for m in instance_masks
                ],
                "prompt_boxes_next": [_box_to_list(b) for b in next_prompts],
                "verdict": verdict.to_dict(),
                "recovery_attempted": recovery_attempted,
            }
        )
        self.records.append(record)
        if source in (MaskSource.INITIAL, MaskSource.MANUAL):
            for m in instance_masks:
                self.anchor_areas[m.instance_id] = m.mask.area
        if source is MaskSource.RECOVERY:
            self.recovered_frames += 1
        if source is MaskSource.MANUAL:
            self.manual_frames += 1
        self.cursor = frame_index + 1
        self.pending_conflict = None
        if self.cursor >= len(self.manifest):
            self.pending = None
            self.status = SessionStatus.COMPLETED
            events.append({"event": "completed"})
        else:
            self.pending = PendingFrame(list(next_prompts), MaskSource.MODEL)
            self.status = SessionStatus.RUNNING
            if (
                self.params.snapshot_interval
                and self.cursor % self.params.snapshot_interval == 0
            ):
                events.append(
                    {
                        "event": "snapshot",
                        "cursor": self.cursor,
                        "status": self.status.value,
                    }
                )

    # -- operations -------------------------------------------------------------

    def step(self) -> StepOutcome:
        """Advance by one frame. Never blocks on human input: a failed frame
        reports NEEDS_MANUAL and leaves the cursor in place. Backend errors
        propagate without changing session state."""
        with self._lock:
            if self.status is SessionStatus.COMPLETED:
                return StepOutcome.COMPLETED
            if self.status is not SessionStatus.RUNNING:
                raise EngineStateError(f"cannot step while {self.status.value}")
            assert self.pending is not None
            frame_index = self.cursor
            frame = self._frame_ref(frame_index)
            pending = self.pending
            events: list[dict] = []

            prompts = [BoxPrompt(b) for b in pending.prompts]
            results = self.backend.segment(frame, prompts)
            if len(results) != self.expected_count:
                raise EngineStateError(
                    f"backend returned {len(results)} masks for "
                    f"{self.expected_count} prompts"
                )
            events.append(
                self._backend_call_event(frame_index, "segment", prompts, results)
            )
            masks = self._clean(results)

            trusted = pending.source in (MaskSource.INITIAL, MaskSource.MANUAL)
            if trusted or not self.params.validation_enabled:
                self._accept(
                    frame_index,
                    masks,
                    pending.source,
                    Verdict(VerdictOutcome.PASS),
                    pending.recovery_attempted,
                    events,
                )
                self._emit(events)
                return StepOutcome.ADVANCED

            candidate = [
                InstanceMask(
                    mask=m, instance_id=i, frame_index=frame_index, source=MaskSource.MODEL
                )
                for i, m in enumerate(masks)
            ]
            verdict = self._validate_masks(candidate)
            if verdict.passed:
                self._accept(
                    frame_index,
                    masks,
                    MaskSource.MODEL,
                    verdict,
                    pending.recovery_attempted,
                    events,
                )
                self._emit(events)
                return StepOutcome.ADVANCED

            if self.params.recovery_enabled and not pending.recovery_attempted:
                grid_results = self.backend.segment_grid(frame, self.params.grid)
                events.append(
                    self._backend_call_event(
                        frame_index, "segment_grid", [], grid_results
                    )
                )
                claimed = self._claim_recovery(grid_results)
                if claimed is not None:
                    cleaned = [
                        remove_outliers(m, self.params.density) for m in claimed
                    ]
                    recovered = [
                        InstanceMask(
                            mask=m,
                            instance_id=i,
                            frame_index=frame_index,
                            source=MaskSource.RECOVERY,
                        )
                        for i, m in enumerate(cleaned)
                    ]
                    second = self._validate_masks(recovered)
                    if second.passed:
                        self._accept(
                            frame_index,
                            cleaned,
                            MaskSource.RECOVERY,
                            second,
                            True,
                            events,
                        )
                        self._emit(events)
                        return StepOutcome.RECOVERY_ADVANCED
                    verdict = second
                pending.recovery_attempted = True

            return self._conflict(frame_index, verdict, events)

    def _conflict(
        self, frame_index: int, verdict: Verdict, events: list[dict]
    ) -> StepOutcome:
        assert self.pending is not None
        self.pending.recovery_attempted = True
        self.status = SessionStatus.NEEDS_MANUAL
        self.pending_conflict = ConflictEvent(
            session_id=self.id,
            frame_index=frame_index,
            verdict=verdict,
            required_count=self.expected_count,
        )
        events.append(
            {
                "event": "conflict",
                "frame": frame_index,
                "verdict": verdict.to_dict(),
                "required_count": self.expected_count,
            }
        )
        self._emit(events)
        return StepOutcome.NEEDS_MANUAL

    def submit_manual_prompts(
        self, frame_index: int, prompts: Sequence[BBox]
    ) -> None:
        """Resolve a conflict: segment the frame from human-drawn boxes,
        accept without validation, and resume."""
        with self._lock:
            if self.status is not SessionStatus.NEEDS_MANUAL:
                raise EngineStateError(
                    f"manual prompts not accepted while {self.status.value}"
                )
            if frame_index != self.cursor:
                raise EngineStateError(
                    f"conflict is at frame {self.cursor}, not {frame_index}"
                )
            if len(prompts) != self.expected_count:
                raise ValueError(
                    f"expected {self.expected_count} prompts, got {len(prompts)}"
                )
            frame = self._frame_ref(frame_index)
            events: list[dict] = [
                {
                    "event": "manual_prompts",
                    "frame": frame_index,
                    "boxes": [_box_to_list(b) for b in prompts],
                }
            ]
            wire_prompts = [BoxPrompt(b) for b in prompts]
            results = self.backend.segment(frame, wire_prompts)
            events.append(
                self._backend_call_event(frame_index, "segment", wire_prompts, results)
            )
            masks = self._clean(results)
            self._accept(
                frame_index,
                masks,
                MaskSource.MANUAL,
                Verdict(VerdictOutcome.PASS),
                True,
                events,
            )
            self._emit(events)

    def run_until_blocked(self, max_steps: int | None = None) -> SessionStatus:
        """Step until the session completes or needs a human."""
        steps = 0
        while self.status is SessionStatus.RUNNING:
            if max_steps is not None and steps >= max_steps:
                break
            outcome = self.step()
            steps += 1
            if outcome in (StepOutcome.NEEDS_MANUAL, StepOutcome.COMPLETED):
                break
        return self.status

    # -- exports ------------------------------------------------------------------

    def export_mot(self) -> str:
        """MOT CSV over all accepted frames; boxes are the tight mask boxes,
        frame and id 1-based."""
        lines = []
        for record in self.records:
            for m in record.masks:
                box = mask_to_bbox(m.mask)
                lines.append(
                    format_line(
                        MotRecord(
                            frame=record.frame_index + 1,
                            track_id=m.instance_id + 1,
                            bbox=box,
                            score=1.0,
                        )
                    )
                )
        return "\n".join(lines) + ("\n" if lines else "")

    def export_yolo(self) -> dict[str, str]:
        """One label file per accepted frame, named after the frame image
        stem: lines 'class cx cy w h' normalized to [0, 1]."""
        out: dict[str, str] = {}
        w, h = self.manifest.width, self.manifest.height
        for record in self.records:
            lines = []
            for m in record.masks:
                box = mask_to_bbox(m.mask)
                cx = (box.x_min + box.x_max) / 2.0 / w
                cy = (box.y_min + box.y_max) / 2.0 / h
                bw = box.width / w
                bh = box.height / h
                lines.append(f"0 {cx:.6f} {cy:.6f} {bw:.6f} {bh:.6f}")
            stem = Path(self.manifest.frames[record.frame_index]).stem
            out[f"{stem}.txt"] = "\n".join(lines) + "\n"
        return out

    def transcript(self) -> list[TranscriptEntry]:
        """Backend responses recorded in the journal, for offline replay."""
        entries = []
        for event in self.journal.events:
            if event.get("event") != "backend_call":
                continue
            entries.append(
                TranscriptEntry(
                    frame_index=event["frame"],
                    kind=event["kind"],
                    results=[
                        MaskResult(
                            mask=rle_decode(
                                m["rle"], self.manifest.width, self.manifest.height
                            ),
                            score=m["score"],
                        )
                        for m in event["masks"]
                    ],
                )
            )
        return entries

    def replay_backend(self) -> ReplayBackend:
        return ReplayBackend(self.transcript())

    def stats(self) -> dict:
        return {
            "frames_total": len(self.manifest),
            "frames_done": self.cursor,
            "recovered_frames": self.recovered_frames,
            "manual_frames": self.manual_frames,
            "status": self.status.value,
        }


def start_session(
    manifest: FrameManifest,
    params: EngineParams,
    backend: SegmentationBackend,
    initial_prompts: Sequence[BBox],
    journal_path: str | Path,
    session_id: str | None = None,
) -> Session:
    return Session.start(
        manifest, params, backend, initial_prompts, journal_path, session_id
    )
