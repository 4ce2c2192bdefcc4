"""Teacher-forced extraction of per-token distribution summaries.

One forward pass per trajectory (batched): the candidate model reads
prompt + expert trajectory, and at every trajectory position the next-token
distribution is summarized by the expert token's log probability, its
competition rank (ties resolved in the expert's favor), the mode
probability, and entropy normalized by log of the full vocabulary size.
Summaries are computed in float64 from the float32 logits.
"""

from __future__ import annotations

import math
from pathlib import Path

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

from .jobs import COT_LEAD_IN, ExtractionItem, ExtractionJob, JobError
from .records import TokenSummary, TrajectoryRecord, write_records

# Tokenizers advertise huge sentinel lengths when the model has no hard
# context limit; treat anything above this as unbounded.
MAX_SANE_CONTEXT = 10**9

MIN_PROB = 1e-300  # keeps log finite if a softmax entry underflows


def distribution_summaries(
    logits: torch.Tensor, target_ids: torch.Tensor, expert_logits: torch.Tensor | None = None
) -> list[TokenSummary]:
    """Summaries for each position of a (T, V) logits block.

    ``logits[t]`` is the predictive distribution for ``target_ids[t]``.
    """
    if logits.ndim != 2 or target_ids.ndim != 1 or logits.shape[0] != target_ids.shape[0]:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)}, targets {tuple(target_ids.shape)}")
    probs = torch.softmax(logits.double(), dim=-1)
    vocab = probs.shape[-1]
    log_vocab = math.log(vocab)
    p_target = probs.gather(1, target_ids.view(-1, 1)).squeeze(1).clamp_min(MIN_PROB)
    ranks = 1 + (probs > p_target.unsqueeze(1)).sum(dim=1)
    max_prob = probs.max(dim=1).values
    plogp = torch.where(probs > 0, probs * probs.log(), torch.zeros_like(probs))
    entropy = (-plogp.sum(dim=1) / log_vocab).clamp(0.0, 1.0)
    expert_logprob = None
    if expert_logits is not None:
        expert_probs = torch.softmax(expert_logits.double(), dim=-1)
        expert_logprob = expert_probs.gather(1, target_ids.view(-1, 1)).squeeze(1).clamp_min(MIN_PROB).log()
    summaries = []
    for t in range(len(target_ids)):
        summaries.append(
            TokenSummary(
                token_id=int(target_ids[t]),
                logprob=min(float(p_target[t].log()), 0.0),
                rank=int(ranks[t]),
                max_prob=float(max_prob[t]),
                entropy_norm=float(entropy[t]),
                expert_logprob=min(float(expert_logprob[t]), 0.0) if expert_logprob is not None else None,
            )
        )
    return summaries


class Extractor:
    """Holds the loaded candidate (and optional expert) model."""

    def __init__(self, job: ExtractionJob):
        job.validate()
        self.job = job
        self.tokenizer = AutoTokenizer.from_pretrained(job.model)
        self.model = AutoModelForCausalLM.from_pretrained(job.model)
        self.model.eval()
        self.expert_model = None
        if job.expert_model is not None:
            expert_tokenizer = AutoTokenizer.from_pretrained(job.expert_model)
            if expert_tokenizer.get_vocab() != self.tokenizer.get_vocab():
                raise JobError(
                    "tokenizer mismatch: expert model must share the candidate's vocabulary "
                    "for token-level logprobs to be comparable"
                )
            self.expert_model = AutoModelForCausalLM.from_pretrained(job.expert_model)
            self.expert_model.eval()
        self.pad_id = self.tokenizer.pad_token_id
        if self.pad_id is None:
            self.pad_id = self.tokenizer.eos_token_id if self.tokenizer.eos_token_id is not None else 0

    def _context_limit(self) -> int | None:
        limit = getattr(self.model.config, "max_position_embeddings", None)
        if limit is None:
            limit = self.tokenizer.model_max_length
        if limit is None or limit > MAX_SANE_CONTEXT:
            return None
        return int(limit)

    def _prompt_ids(self, item: ExtractionItem) -> list[int]:
        template = self.job.prompt_template
        if template == "chat":
            if not getattr(self.tokenizer, "chat_template", None):
                raise JobError("prompt_template 'chat' requires a tokenizer with a chat template")
            text = self.tokenizer.apply_chat_template(
                [{"role": "user", "content": item.prompt}], tokenize=False, add_generation_prompt=True
            )
            ids = self.tokenizer.encode(text, add_special_tokens=False)
        elif template == "cot":
            text = f"{item.prompt}\n{COT_LEAD_IN}\n" if item.prompt else f"{COT_LEAD_IN}\n"
            ids = self.tokenizer.encode(text, add_special_tokens=True)
        else:
            ids = self.tokenizer.encode(item.prompt, add_special_tokens=True) if item.prompt else []
        if not ids:
            # The first trajectory token needs at least one context position.
            fallback = self.tokenizer.bos_token_id
            if fallback is None:
                fallback = self.pad_id
            ids = [int(fallback)]
        return ids

    def _prepare(self, item: ExtractionItem) -> tuple[list[int], list[int], bool]:
        prompt_ids = self._prompt_ids(item)
        trajectory_ids = self.tokenizer.encode(item.trajectory, add_special_tokens=False)
        if not trajectory_ids:
            raise JobError(f"item {item.task}/{item.instance}: trajectory tokenizes to nothing")
        trajectory_ids = trajectory_ids[-self.job.truncation :]
        truncated = False
        limit = self._context_limit()
        if limit is not None and len(prompt_ids) + len(trajectory_ids) > limit:
            allowed = limit - len(prompt_ids)
            if allowed < 1:
                raise JobError(
                    f"item {item.task}/{item.instance}: prompt alone fills the {limit}-token context"
                )
            trajectory_ids = trajectory_ids[-allowed:]  # keep the final tokens
            truncated = True
        return prompt_ids, trajectory_ids, truncated

    @torch.no_grad()
    def _batch_logits(self, model, sequences: list[list[int]]) -> list[torch.Tensor]:
        width = max(len(s) for s in sequences)
        ids = torch.full((len(sequences), width), self.pad_id, dtype=torch.long)
        mask = torch.zeros((len(sequences), width), dtype=torch.long)
        for i, seq in enumerate(sequences):
            ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
            mask[i, : len(seq)] = 1
        logits = model(input_ids=ids, attention_mask=mask).logits
        return [logits[i, : len(seq)] for i, seq in enumerate(sequences)]

    def run(self) -> list[TrajectoryRecord]:
        records = []
        prepared = [self._prepare(item) for item in self.job.items]
        for start in range(0, len(self.job.items), self.job.batch_size):
            batch = list(range(start, min(start + self.job.batch_size, len(self.job.items))))
            sequences = [prepared[i][0] + prepared[i][1] for i in batch]
            candidate_logits = self._batch_logits(self.model, sequences)
            expert_logits = (
                self._batch_logits(self.expert_model, sequences) if self.expert_model is not None else None
            )
            for j, i in enumerate(batch):
                item = self.job.items[i]
                prompt_ids, trajectory_ids, truncated = prepared[i]
                p = len(prompt_ids)
                targets = torch.tensor(trajectory_ids, dtype=torch.long)
                # logits at position k predict token k+1: trajectory token t
                # (full index p + t) is predicted from position p + t - 1.
                block = candidate_logits[j][p - 1 : p + len(trajectory_ids) - 1]
                expert_block = (
                    expert_logits[j][p - 1 : p + len(trajectory_ids) - 1]
                    if expert_logits is not None
                    else None
                )
                summaries = distribution_summaries(block, targets, expert_block)
                records.append(
                    TrajectoryRecord(
                        task=item.task,
                        instance=item.instance,
                        expert=item.expert,
                        answer_correct=item.answer_correct,
                        tokens=summaries,
                        template=self.job.prompt_template,
                        truncated=truncated,
                    )
                )
        return records


def extract(job: ExtractionJob, out_path: str | Path) -> int:
    """Run the job and write the trajectory file; returns the record count."""
    records = Extractor(job).run()
    write_records(records, out_path)
    return len(records)
