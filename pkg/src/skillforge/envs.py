"""Native text environments: a code-breaking game and a 1-D line walk.

Both implement the same interface so rollout code never special-cases them:
``reset(seed) -> EnvState``, ``step(action_text) -> (EnvState, reward,
terminal)``, ``admissible() -> list | None``. Misbehaving actions never raise;
they become in-band feedback text with a penalty, the way the game itself
talks back to the player.
"""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .errors import CapacityError, ValidationError
from .trajectory import EnvState


class TextEnv(Protocol):
    """Environment interface; adapters for external suites plug in here."""

    name: str

    def reset(self, seed: int | None = None) -> EnvState: ...

    def step(self, action_text: str) -> tuple[EnvState, float, bool]: ...

    def admissible(self) -> list[str] | None: ...


# ── Code-breaking game ───────────────────────────────────────────────

_TIERS = {
    "v0": (4, 1, 6),
    "Hard": (5, 1, 8),
    "Extreme": (6, 1, 10),
}


@dataclass(frozen=True)
class MastermindConfig:
    code_length: int = 4
    digit_min: int = 1
    digit_max: int = 6
    allow_duplicates: bool = False
    max_turns: int = 20
    difficulty_tag: str = "v0"
    win_reward: float = 1.0
    invalid_penalty: float = -0.05
    invalid_retry_budget: int = 3

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValidationError("mastermind field 'max_turns' must be >= 1")
        span = self.digit_max - self.digit_min + 1
        if span < 1:
            raise ValidationError("mastermind digit range is empty")
        if not self.allow_duplicates and span < self.code_length:
            raise ValidationError(
                "mastermind digit range smaller than code_length with duplicates disallowed"
            )

    @classmethod
    def from_tier(cls, tag: str, **overrides) -> MastermindConfig:
        if tag not in _TIERS:
            raise ValidationError(f"unknown difficulty tag {tag!r}; expected one of {sorted(_TIERS)}")
        length, lo, hi = _TIERS[tag]
        params = dict(code_length=length, digit_min=lo, digit_max=hi, difficulty_tag=tag)
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class PegFeedback:
    black: int
    white: int

    def __post_init__(self):
        if self.black < 0 or self.white < 0:
            raise ValidationError("peg counts must be >= 0")


def mastermind_feedback(
    secret: Sequence[int],
    guess: Sequence[int],
    digit_min: int | None = None,
    digit_max: int | None = None,
) -> PegFeedback:
    """Peg counts for a guess: black = exact positional matches, white =
    digits present in both codes but misplaced (multiset intersection minus
    black)."""
    if len(secret) != len(guess):
        raise ValidationError(
            f"guess length {len(guess)} does not match secret length {len(secret)}"
        )
    for label, code in (("secret", secret), ("guess", guess)):
        for d in code:
            if digit_min is not None and d < digit_min:
                raise ValidationError(f"{label} digit {d} below minimum {digit_min}")
            if digit_max is not None and d > digit_max:
                raise ValidationError(f"{label} digit {d} above maximum {digit_max}")
    black = sum(1 for s, g in zip(secret, guess) if s == g)
    digits = set(secret) | set(guess)
    overlap = sum(min(list(secret).count(d), list(guess).count(d)) for d in digits)
    return PegFeedback(black=black, white=overlap - black)


def mastermind_consistent_codes(
    history: Iterable[tuple[Sequence[int], PegFeedback]],
    config: MastermindConfig,
    enumeration_cap: int = 500_000,
) -> list[tuple[int, ...]]:
    """Enumerate every code consistent with all observed feedback pairs.

    Exhaustive over the code space; used as a test oracle and for the partial
    scoring sanity checks. An oversized space raises rather than grinding.
    """
    digits = range(config.digit_min, config.digit_max + 1)
    span = len(digits)
    if config.allow_duplicates:
        space_size = span ** config.code_length
        candidates = itertools.product(digits, repeat=config.code_length)
    else:
        space_size = 1
        for i in range(config.code_length):
            space_size *= span - i
        candidates = itertools.permutations(digits, config.code_length)
    if space_size > enumeration_cap:
        raise CapacityError(
            f"code space of {space_size} exceeds enumeration cap {enumeration_cap}"
        )
    pairs = [(tuple(guess), fb) for guess, fb in history]
    out = []
    for code in candidates:
        if all(mastermind_feedback(code, guess) == fb for guess, fb in pairs):
            out.append(code)
    return out


_GUESS_RE = re.compile(r"\[([0-9,\s]+)\]")


def parse_guess(action_text: str) -> list[int] | None:
    """Pull the last bracketed digit group out of an action string."""
    matches = _GUESS_RE.findall(action_text)
    if not matches:
        return None
    parts = re.split(r"[,\s]+", matches[-1].strip())
    try:
        return [int(p) for p in parts if p]
    except ValueError:
        return None


class MastermindEnv:
    """Turn-based code-breaking game with in-band invalid-move handling.

    Rewards are terminal-only by default: the win reward on success, otherwise
    a partial score of best-black-count / code_length when the episode ends by
    turn exhaustion or by burning through the invalid-retry budget. Invalid
    attempts cost a small penalty and do not consume a turn until the budget
    for the current turn runs out.
    """

    def __init__(self, config: MastermindConfig | None = None):
        self.config = config or MastermindConfig()
        self.name = f"mastermind-{self.config.difficulty_tag}"
        self._secret: tuple[int, ...] = ()
        self._transcript = ""
        self._turn = 0
        self._step_index = 0
        self._invalid_streak = 0
        self._best_black = 0
        self._guessed: list[tuple[int, ...]] = []
        self._terminal = True

    def reset(self, seed: int | None = None) -> EnvState:
        cfg = self.config
        rng = random.Random(seed)
        digits = list(range(cfg.digit_min, cfg.digit_max + 1))
        if cfg.allow_duplicates:
            self._secret = tuple(rng.choice(digits) for _ in range(cfg.code_length))
        else:
            self._secret = tuple(rng.sample(digits, cfg.code_length))
        dup_rule = "duplicates allowed" if cfg.allow_duplicates else "no duplicates"
        sample = " ".join(str(d) for d in range(cfg.digit_min, cfg.digit_min + cfg.code_length))
        self._transcript = (
            f"You are playing Mastermind. You need to find the code that is "
            f"{cfg.code_length} digits long, each digit from {cfg.digit_min} to "
            f"{cfg.digit_max}, with {dup_rule}. Submit your guess in the format "
            f"'[{sample}]'. After each guess you will receive feedback as black and "
            f"white pegs. A black peg indicates a correct digit in the correct "
            f"position, while a white peg indicates a correct digit in the wrong "
            f"position. You have {cfg.max_turns} turns to guess the code. Turn 1."
        )
        self._turn = 0
        self._step_index = 0
        self._invalid_streak = 0
        self._best_black = 0
        self._guessed = []
        self._terminal = False
        return self._state()

    def admissible(self) -> list[str] | None:
        return None

    @property
    def turns_used(self) -> int:
        return self._turn

    def _state(self) -> EnvState:
        return EnvState(
            text=self._transcript,
            admissible=None,
            terminal=self._terminal,
            step_index=self._step_index,
        )

    def _partial_reward(self) -> float:
        return self._best_black / self.config.code_length

    def _finish(self, message: str, reward: float) -> tuple[EnvState, float, bool]:
        self._terminal = True
        self._transcript += f"\n{message}\nFinal reward: {reward}."
        return self._state(), reward, True

    def _invalid(self, reason: str) -> tuple[EnvState, float, bool]:
        cfg = self.config
        self._invalid_streak += 1
        self._transcript += (
            f"\nYou attempted an invalid move. Reason: {reason} "
            "Please try a different guess. Please resubmit a valid move and "
            "remember to follow the game rules to avoid penalties."
        )
        if self._invalid_streak >= cfg.invalid_retry_budget:
            return self._finish("Game Over! Too many invalid moves.", self._partial_reward())
        return self._state(), cfg.invalid_penalty, False

    def step(self, action_text: str) -> tuple[EnvState, float, bool]:
        if self._terminal:
            raise ValidationError("step() called on a terminal episode")
        cfg = self.config
        self._step_index += 1
        guess = parse_guess(action_text)
        if guess is None or len(guess) != cfg.code_length:
            return self._invalid("Your guess could not be parsed as a full code.")
        if any(d < cfg.digit_min or d > cfg.digit_max for d in guess):
            return self._invalid(f"Digits must be between {cfg.digit_min} and {cfg.digit_max}.")
        if not cfg.allow_duplicates and len(set(guess)) != len(guess):
            return self._invalid("Duplicate digits are not allowed.")
        key = tuple(guess)
        if key in self._guessed:
            shown = ", ".join(str(d) for d in guess)
            return self._invalid(f"You have already guessed [{shown}].")

        self._invalid_streak = 0
        self._guessed.append(key)
        self._turn += 1
        fb = mastermind_feedback(self._secret, key)
        self._best_black = max(self._best_black, fb.black)
        shown = " ".join(str(d) for d in guess)
        self._transcript += (
            f"\nSubmitted [{shown}]. Feedback: {fb.black} black peg(s), "
            f"{fb.white} white peg(s)."
        )
        if fb.black == cfg.code_length:
            return self._finish("Congratulations, you cracked the code!", cfg.win_reward)
        if self._turn >= cfg.max_turns:
            return self._finish("Game Over! You are out of turns.", self._partial_reward())
        self._transcript += f" Turn {self._turn + 1}."
        return self._state(), 0.0, False


# ── 1-D line walk ────────────────────────────────────────────────────


@dataclass(frozen=True)
class LineWorldConfig:
    length: int = 4
    start: int = 0
    vary_start_with_seed: bool = False
    goal_reward: float = 1.0

    def __post_init__(self):
        if self.length < 2:
            raise ValidationError("lineworld field 'length' must be >= 2")
        if not (0 <= self.start < self.length - 1):
            raise ValidationError("lineworld field 'start' must lie before the goal")


class LineWorldEnv:
    """Deterministic walk on a line: the goal sits at the right end and pays
    the only reward. The start cell can optionally be derived from the seed so
    batches mix episode lengths."""

    def __init__(self, config: LineWorldConfig | None = None):
        self.config = config or LineWorldConfig()
        self.name = "lineworld"
        self._pos = 0
        self._step_index = 0
        self._note = ""
        self._terminal = True

    @property
    def goal(self) -> int:
        return self.config.length - 1

    def reset(self, seed: int | None = None) -> EnvState:
        cfg = self.config
        if cfg.vary_start_with_seed and seed is not None:
            self._pos = seed % (cfg.length - 1)
        else:
            self._pos = cfg.start
        self._step_index = 0
        self._note = ""
        self._terminal = False
        return self._state()

    def admissible(self) -> list[str] | None:
        return ["left", "right"]

    def _state(self) -> EnvState:
        text = (
            f"You are standing on a line at position {self._pos} of "
            f"{self.config.length}. The goal is at position {self.goal}. "
            f"Moves: left, right."
        )
        if self._note:
            text += f" {self._note}"
        if self._terminal:
            text += " You reached the goal."
        return EnvState(
            text=text,
            admissible=tuple(self.admissible() or ()),
            terminal=self._terminal,
            step_index=self._step_index,
        )

    def step(self, action_text: str) -> tuple[EnvState, float, bool]:
        if self._terminal:
            raise ValidationError("step() called on a terminal episode")
        self._step_index += 1
        move = action_text.lower()
        if "right" in move:
            self._pos = min(self._pos + 1, self.goal)
            self._note = ""
        elif "left" in move:
            self._pos = max(self._pos - 1, 0)
            self._note = ""
        else:
            self._note = "Invalid move; stay where you are."
            return self._state(), 0.0, False
        if self._pos == self.goal:
            self._terminal = True
            return self._state(), self.config.goal_reward, True
        return self._state(), 0.0, False
