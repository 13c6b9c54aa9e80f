"""Annotator backends: the stage interface, a deterministic mock, and a
chat-completions HTTP client.

Backends are stateless per request. The mock is template-driven from a
synthetic scene script so the whole pipeline runs without a network or a
model; it deliberately produces the same mildly messy shapes a real
annotator does (code fences, stray prose) so downstream parsers get
exercised, while staying byte-deterministic for a given seed.
"""

from __future__ import annotations

import abc
import base64
import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from threading import BoundedSemaphore
from typing import Mapping, Sequence

from .errors import AuthError, BackendUnavailable, ConfigError
from .prompts import render_plan_prompt, render_reason_prompt, render_segment_prompt
from .types import CompletionState, SubtaskSegment

ENDPOINT_ENV = "ANNOTATOR_ENDPOINT"
MODEL_ENV = "ANNOTATOR_MODEL"
TOKEN_ENV = "ANNOTATOR_TOKEN"


@dataclass(frozen=True)
class FramePayload:
    """One frame as handed to a backend: index in the original trajectory,
    the episode instruction, and (when available) encoded image bytes."""

    index: int
    instruction: str
    image_bytes: bytes | None = None
    image_format: str = "png"


class AnnotatorBackend(abc.ABC):
    """Interface for the three annotation stages."""

    needs_images: bool = False

    @abc.abstractmethod
    def plan(self, instruction: str, frames: Sequence[FramePayload]) -> str:
        """Free-text numbered task plan for the episode."""

    @abc.abstractmethod
    def segment(self, instruction: str, plan: Sequence[str],
                frames: Sequence[FramePayload]) -> str:
        """Free-text (JSON-bearing) subtask segmentation; frames carry the
        indices used in the response."""

    @abc.abstractmethod
    def reason(self, frame: FramePayload, state: CompletionState,
               remaining: Sequence[str]) -> str:
        """Free-text keyframe reasoning for the given completion state."""


def _stable_hash(*parts) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


@dataclass(frozen=True)
class EpisodeScript:
    """Ground-truth scene script behind one synthetic episode."""

    plan: tuple[str, ...]
    segments: tuple[SubtaskSegment, ...]
    outcome: str = "success"
    failure_type: str | None = None
    t_cut: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "plan": list(self.plan),
            "segments": [
                {"id": s.id, "name": s.name, "start_frame": s.start_frame,
                 "complete_frame": s.complete_frame, "notes": s.notes}
                for s in self.segments
            ],
            "outcome": self.outcome,
            "failure_type": self.failure_type,
            "t_cut": self.t_cut,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EpisodeScript":
        return cls(
            plan=tuple(d["plan"]),
            segments=tuple(SubtaskSegment(
                id=s["id"], name=s["name"], start_frame=s["start_frame"],
                complete_frame=s["complete_frame"], notes=s.get("notes", ""))
                for s in d["segments"]),
            outcome=d.get("outcome", "success"),
            failure_type=d.get("failure_type"),
            t_cut=d.get("t_cut"))


class MockBackend(AnnotatorBackend):
    """Scripted annotator keyed by episode instruction."""

    needs_images = False

    def __init__(self, scripts: Mapping[str, EpisodeScript], seed: int = 0,
                 fence_rate: float = 0.3, prose_rate: float = 0.25):
        self.scripts = dict(scripts)
        self.seed = seed
        self.fence_rate = fence_rate
        self.prose_rate = prose_rate

    def _script(self, instruction: str) -> EpisodeScript:
        try:
            return self.scripts[instruction]
        except KeyError:
            raise KeyError(f"mock backend has no script for instruction {instruction!r}")

    def _coin(self, rate: float, *parts) -> bool:
        return (_stable_hash(self.seed, *parts) % 10_000) < rate * 10_000

    def plan(self, instruction, frames):
        script = self._script(instruction)
        body = "\n".join(f"{i}. {name}" for i, name in enumerate(script.plan, 1))
        if self._coin(self.prose_rate, "plan-pre", instruction):
            body = "Here is the decomposition of the task:\n" + body
        if self._coin(self.prose_rate, "plan-post", instruction):
            body = body + "\nThese steps complete the task."
        return body

    def segment(self, instruction, plan, frames):
        script = self._script(instruction)
        payload = {
            "task": instruction,
            "subtasks": [
                {"id": s.id, "notes": s.notes, "start_frame": s.start_frame,
                 "complete_frame": s.complete_frame, "name": s.name}
                for s in script.segments
            ],
            "overall_notes": "task not completed" if script.outcome == "failure" else "",
        }
        text = json.dumps(payload, indent=1)
        if self._coin(self.fence_rate, "segment-fence", instruction):
            text = "```json\n" + text + "\n```"
        return text

    def reason(self, frame, state, remaining):
        script = self._script(frame.instruction)
        done = [name for name in script.plan if name not in remaining]
        scene = (f"Image shows the robot mid-way through '{frame.instruction}' "
                 f"at frame {frame.index}"
                 + (f", having completed: {'; '.join(done)}" if done else "")
                 + ".")
        if state is CompletionState.FINISHED:
            return (f"{scene} This task is finished because every planned "
                    f"action has been carried out.")
        if state is CompletionState.GIVEN_UP:
            why = script.failure_type or "the remaining actions were never executed"
            return (f"{scene} This task is not finished because {why}.")
        nxt = remaining[0] if remaining else "verify the final state"
        variant = _stable_hash(self.seed, "reason", frame.instruction,
                               frame.index, state.value) % 2
        if variant == 0:
            return (f"{scene} This task is not finished because "
                    f"{len(remaining)} action(s) remain. The robot should next "
                    f"{nxt[0].lower() + nxt[1:] if nxt else nxt}.")
        return (f"{scene} This task is not finished since the following still "
                f"needs doing: {'; '.join(remaining)}. Next step: {nxt}.")


# --- remote chat-completions backend -----------------------------------------

def build_chat_body(model: str, prompt: str, frames: Sequence[FramePayload],
                    indexed: bool = False) -> dict:
    """Chat-completions request body: one user message whose content
    interleaves the prompt text with base64 data-URL image parts (each
    preceded by its frame-index marker when ``indexed``)."""
    content: list[dict] = [{"type": "text", "text": prompt}]
    for frame in frames:
        if frame.image_bytes is None:
            raise ConfigError(
                f"frame {frame.index} has no image bytes; remote backends need images")
        if indexed:
            content.append({"type": "text", "text": f"<frame_id: {frame.index}>"})
        b64 = base64.b64encode(frame.image_bytes).decode("ascii")
        content.append({
            "type": "image_url",
            "image_url": {"url": f"data:image/{frame.image_format};base64,{b64}"},
        })
    return {
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
    }


class RemoteBackend(AnnotatorBackend):
    """HTTP client for an OpenAI-style chat-completions endpoint.

    In-flight concurrency is bounded with a semaphore; 429 and 5xx
    responses retry with exponential backoff up to ``max_attempts``, after
    which BackendUnavailable propagates (the pipeline quarantines the
    episode and keeps running).
    """

    needs_images = True

    def __init__(self, endpoint: str, model: str, token: str,
                 timeout: float = 60.0, max_attempts: int = 3,
                 backoff_base: float = 0.5, max_in_flight: int = 8):
        if not endpoint or not model:
            raise ConfigError("remote backend needs an endpoint and a model name")
        if not token:
            raise AuthError(f"missing annotator token (set {TOKEN_ENV})")
        self.endpoint = endpoint
        self.model = model
        self.token = token
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._slots = BoundedSemaphore(max_in_flight)

    def _post(self, body: dict) -> str:
        data = json.dumps(body).encode("utf-8")
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {self.token}",
        }
        last_error = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            req = urllib.request.Request(self.endpoint, data=data,
                                         headers=headers, method="POST")
            try:
                with self._slots:
                    with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                        payload = json.loads(resp.read().decode("utf-8"))
                return payload["choices"][0]["message"]["content"]
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise AuthError(f"backend rejected credentials (HTTP {exc.code})")
                if exc.code == 429 or exc.code >= 500:
                    last_error = f"HTTP {exc.code}"
                    continue
                raise BackendUnavailable(f"backend returned HTTP {exc.code}")
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last_error = repr(exc)
                continue
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise BackendUnavailable(f"malformed backend response: {exc!r}")
        raise BackendUnavailable(
            f"backend unavailable after {self.max_attempts} attempts: {last_error}")

    def plan(self, instruction, frames):
        return self._post(build_chat_body(
            self.model, render_plan_prompt(instruction), frames, indexed=False))

    def segment(self, instruction, plan, frames):
        return self._post(build_chat_body(
            self.model, render_segment_prompt(instruction, list(plan)),
            frames, indexed=True))

    def reason(self, frame, state, remaining):
        prompt = render_reason_prompt(state, frame.instruction, list(remaining))
        return self._post(build_chat_body(self.model, prompt, [frame], indexed=False))


def remote_annotator(endpoint: str | None = None, model: str | None = None,
                     token: str | None = None, **kwargs) -> RemoteBackend:
    """Build a RemoteBackend, falling back to the ANNOTATOR_* env vars."""
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
    model = model or os.environ.get(MODEL_ENV, "")
    token = token or os.environ.get(TOKEN_ENV, "")
    if not endpoint:
        raise ConfigError(f"no endpoint configured (set {ENDPOINT_ENV})")
    if not model:
        raise ConfigError(f"no model configured (set {MODEL_ENV})")
    return RemoteBackend(endpoint=endpoint, model=model, token=token, **kwargs)
