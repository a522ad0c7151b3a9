"""Clients for the model-worker sidecar, plus in-process stand-ins for tests.

The pipeline only depends on the two-method protocol below; production use
points at the HTTP sidecar, tests use the deterministic stubs.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import requests

from .errors import WorkerError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NliScores:
    entailment: float
    neutral: float
    contradiction: float


class WorkerProtocol(Protocol):
    def generate(self, prompt: str, top_p: float, temperature: float, n: int,
                 max_new_tokens: int = 64, seed: int | None = None) -> list[str]: ...

    def nli(self, premise: str, hypothesis: str) -> NliScores: ...


class HttpWorkerClient:
    """Talks to the worker service; retries transport failures, then surfaces them."""

    def __init__(self, base_url: str, timeout: float = 60.0, retries: int = 3):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def _post(self, route: str, payload: dict) -> dict:
        last_error = None
        for attempt in range(self.retries):
            try:
                response = requests.post(
                    f"{self.base_url}{route}", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(min(2.0, 0.2 * 2**attempt))
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last_error = WorkerError(f"{route} returned {response.status_code}")
                time.sleep(min(2.0, 0.2 * 2**attempt))
                continue
            if response.status_code != 200:
                raise WorkerError(f"{route} returned {response.status_code}: {response.text}")
            return response.json()
        raise WorkerError(f"worker unreachable at {self.base_url}{route}: {last_error}")

    def generate(self, prompt, top_p, temperature, n, max_new_tokens=64, seed=None):
        payload = {
            "prompt": prompt,
            "top_p": top_p,
            "temperature": temperature,
            "n": n,
            "max_new_tokens": max_new_tokens,
        }
        if seed is not None:
            payload["seed"] = seed
        return list(self._post("/generate", payload)["completions"])

    def nli(self, premise, hypothesis):
        scores = self._post("/nli", {"premise": premise, "hypothesis": hypothesis})
        return NliScores(scores["entailment"], scores["neutral"], scores["contradiction"])

    def health(self) -> dict:
        try:
            response = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise WorkerError(f"worker unreachable: {exc}")
        return response.json()


def echo_completions(prompt: str, n: int) -> list[str]:
    """The stub contract: the prompt's last line, n times."""
    lines = prompt.splitlines()
    last = lines[-1] if lines else ""
    return [last] * n


IDENTICAL_NLI = NliScores(0.9, 0.07, 0.03)
DEFAULT_NLI = NliScores(0.6, 0.3, 0.1)


class EchoStubWorker:
    """Deterministic in-process worker matching the service's stub backend."""

    def __init__(self, nli_pairs: dict[tuple[str, str], tuple] | None = None):
        self.nli_pairs = dict(nli_pairs or {})

    def generate(self, prompt, top_p, temperature, n, max_new_tokens=64, seed=None):
        return echo_completions(prompt, n)

    def nli(self, premise, hypothesis):
        if (premise, hypothesis) in self.nli_pairs:
            return NliScores(*self.nli_pairs[(premise, hypothesis)])
        if premise.strip() == hypothesis.strip():
            return IDENTICAL_NLI
        return DEFAULT_NLI


class ScriptedWorker:
    """Test double: caller-supplied behaviour for both endpoints."""

    def __init__(
        self,
        generate_fn: Callable[..., list[str]] | None = None,
        nli_fn: Callable[[str, str], NliScores] | None = None,
    ):
        self._generate = generate_fn
        self._nli = nli_fn
        self.generate_calls: list[dict] = []

    def generate(self, prompt, top_p, temperature, n, max_new_tokens=64, seed=None):
        self.generate_calls.append(
            {"prompt": prompt, "top_p": top_p, "temperature": temperature, "n": n, "seed": seed}
        )
        if self._generate is None:
            return echo_completions(prompt, n)
        return self._generate(prompt=prompt, top_p=top_p, temperature=temperature,
                              n=n, seed=seed)

    def nli(self, premise, hypothesis):
        if self._nli is None:
            return EchoStubWorker().nli(premise, hypothesis)
        return self._nli(premise, hypothesis)
