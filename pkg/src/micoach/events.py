"""Turn events: the observable output stream of a session.

Events are immutable, sequence-numbered with no gaps, and serialize to
stable JSON (sorted keys, fixed separators) so identical sessions produce
byte-identical streams. The ``adherence`` field is pedagogy metadata and is
dropped from trainee-facing serializations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

AGENT_UTTERANCE = "AgentUtterance"
MENU_SHOWN = "MenuShown"
CHOICE_MADE = "ChoiceMade"
FAILURE_UTTERANCE = "FailureUtterance"
SEGMENT_FAILED = "SegmentFailed"
SEGMENT_COMPLETED = "SegmentCompleted"
SESSION_COMPLETED = "SessionCompleted"
RECAP_UTTERANCE = "RecapUtterance"

EVENT_KINDS = {
    AGENT_UTTERANCE, MENU_SHOWN, CHOICE_MADE, FAILURE_UTTERANCE,
    SEGMENT_FAILED, SEGMENT_COMPLETED, SESSION_COMPLETED, RECAP_UTTERANCE,
}

# Kinds that count as one conversational turn for budget accounting.
TURN_KINDS = {AGENT_UTTERANCE, RECAP_UTTERANCE, CHOICE_MADE}

# Kinds that carry spoken/observable dialogue content.
UTTERANCE_KINDS = {AGENT_UTTERANCE, RECAP_UTTERANCE, FAILURE_UTTERANCE, CHOICE_MADE}


@dataclass(frozen=True)
class TurnEvent:
    seq: int
    kind: str
    segment: str
    speaker: str | None = None
    text: str | None = None
    options: tuple[tuple[str, str], ...] | None = None
    adherence: str | None = None
    display_seconds: int | None = None

    def to_dict(self, trainee_facing: bool = False) -> dict:
        d: dict = {"seq": self.seq, "kind": self.kind, "segment": self.segment}
        if self.speaker is not None:
            d["speaker"] = self.speaker
        if self.text is not None:
            d["text"] = self.text
        if self.options is not None:
            d["options"] = [{"id": oid, "label": label} for oid, label in self.options]
        if self.adherence is not None and not trainee_facing:
            d["adherence"] = self.adherence
        if self.display_seconds is not None:
            d["display_seconds"] = self.display_seconds
        return d


def event_to_json(event: TurnEvent, trainee_facing: bool = False) -> str:
    return json.dumps(
        event.to_dict(trainee_facing), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )


def events_to_jsonl(events: list[TurnEvent], trainee_facing: bool = False) -> str:
    return "".join(event_to_json(e, trainee_facing) + "\n" for e in events)


def event_from_dict(d: dict) -> TurnEvent:
    options = d.get("options")
    if options is not None:
        options = tuple((o["id"], o["label"]) for o in options)
    return TurnEvent(
        seq=d["seq"],
        kind=d["kind"],
        segment=d["segment"],
        speaker=d.get("speaker"),
        text=d.get("text"),
        options=options,
        adherence=d.get("adherence"),
        display_seconds=d.get("display_seconds"),
    )
