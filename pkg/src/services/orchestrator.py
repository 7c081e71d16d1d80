"""
Pipeline orchestrator for mmforge
Runs the per-sample stage DAG with caching, resumability and bounded parallelism
"""
import asyncio
import logging
import os
import shutil
import time
from dataclasses import dataclass, field
from functools import reduce
from pathlib import PurePosixPath
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from ..data.prompt_templates import VQA_RETRY_REMINDER
from ..errors import BadResponse, ConfigInvalid, OutputRootUnwritable, UnknownImage, WrongPairCount
from ..models.annotation import CaptionRecord, PromptTemplate
from ..models.backend import (
    AudioRequest, AudioResponse, BackendEndpoint, BACKEND_STAGES, CaptionRequest, CaptionResponse,
    ConditioningMode, PropagateRequest, PropagateResponse, SegmentRequest, SegmentResponse,
    StageKind, VideoRequest, VideoResponse, VqaRequest, VqaResponse,
)
from ..models.coco import CountLabel, DatasetIndex, ImageRecord
from ..models.dataset import SampleManifest, TrackRef
from ..models.pipeline import STAGE_DEPENDENCIES, PipelineConfig, RunReport, StageFailure, StageKey
from ..utils.cache import StageCache
from ..utils.canonical import canonical_json, hex_digest, sample_seed
from ..utils.masks import track_diagnostics
from .annotation_engine import (
    DEFAULT_CAPTION_TEMPLATE, DEFAULT_VQA_TEMPLATE, build_caption_prompt, build_vqa_prompt,
    counts_to_qa, parse_vqa_response,
)
from .backend_gateway import BackendGateway, HttpTransport
from .coco_ingest import count_labels
from .dataset_store import compact_shards, write_sample
from .mock_backends import MockTransport, mock_suite

logger = logging.getLogger(__name__)

STAGE_ORDER = list(StageKind)
RUN_REPORT_FILE = "run_report.json"


def plan_sample(image: ImageRecord, config: PipelineConfig) -> List[StageKind]:
    """Topologically ordered stages for one sample; ties keep StageKind order"""
    wanted = [k for k in STAGE_ORDER if k != StageKind.AUDIO or config.audio_enabled]
    plan: List[StageKind] = []
    remaining = list(wanted)
    while remaining:
        ready = next(k for k in remaining if all(d in plan for d in STAGE_DEPENDENCIES[k]))
        plan.append(ready)
        remaining.remove(ready)
    return plan


def stage_key(kind: StageKind, canonical_request: bytes, upstream: Sequence[StageKey] = ()) -> StageKey:
    """Digest of the stage kind, its canonical request and its upstream keys"""
    return hex_digest(kind.value.encode(), canonical_request, *(k.encode() for k in upstream))


def make_gateway(config: PipelineConfig, mock: bool = False) -> BackendGateway:
    """Gateway over HTTP endpoints, or over the seeded mock suite"""
    if mock:
        endpoints = {
            stage: BackendEndpoint(stage=stage, base_url="mock://local", backoff_base=0)
            for stage in BACKEND_STAGES
        }
        return BackendGateway(endpoints, MockTransport(mock_suite(config.seed, config.output_root)))
    missing = [k.value for k in plan_sample(None, config) if k.value not in config.endpoints]
    if missing:
        raise ConfigInvalid(f"no endpoint configured for stages {missing}")
    return BackendGateway(dict(config.endpoints), HttpTransport())


@dataclass
class SampleContext:
    """Per-sample state threaded through the stage chain"""
    image: ImageRecord
    image_ref: str
    seed: int
    label: CountLabel
    keys: Dict[StageKind, StageKey] = field(default_factory=dict)
    responses: Dict[StageKind, Any] = field(default_factory=dict)
    requests: Dict[StageKind, Any] = field(default_factory=dict)
    cache_hits: int = 0
    trace: List[StageKind] = field(default_factory=list)


class PipelineOrchestrator:
    """Executes samples concurrently; stages within a sample run in plan order"""

    def __init__(self, config: PipelineConfig, gateway: BackendGateway, index: DatasetIndex):
        config.validate()
        self.config = config
        self.gateway = gateway
        self.index = index
        self.root = config.output_root
        self.cache = StageCache(self.root / "cache", self.root)
        self.caption_template = (
            PromptTemplate.from_file(config.caption_template_path, "caption")
            if config.caption_template_path else DEFAULT_CAPTION_TEMPLATE
        )
        self.vqa_template = (
            PromptTemplate.from_file(config.vqa_template_path, "vqa")
            if config.vqa_template_path else DEFAULT_VQA_TEMPLATE
        )
        self.traces: Dict[int, List[StageKind]] = {}
        self._draining = False
        self._handlers = {
            StageKind.CAPTION: self._caption,
            StageKind.VQA: self._vqa,
            StageKind.VIDEO: self._video,
            StageKind.SEGMENT: self._segment,
            StageKind.PROPAGATE: self._propagate,
            StageKind.AUDIO: self._audio,
        }

    def request_drain(self) -> None:
        """Finish in-flight samples, start no new ones"""
        if not self._draining:
            logger.info("Drain requested: no new samples will start")
        self._draining = True

    async def run(self, image_ids: Iterable[int]) -> RunReport:
        start = time.monotonic()
        image_ids = list(image_ids)
        unknown = [i for i in image_ids if i not in self.index.images]
        if unknown:
            raise UnknownImage(f"image ids not in index: {unknown[:10]}")
        self._prepare_output_root()
        self.cache.sweep_partial()

        logger.info(f"Starting run over {len(image_ids)} samples with {self.config.max_workers} workers")
        semaphore = asyncio.Semaphore(self.config.max_workers)

        async def worker(image_id: int) -> RunReport:
            async with semaphore:
                if self._draining:
                    return _failed(image_id, "drain", "not started: run was drained", 0)
                return await self._run_sample(image_id)

        partials = await asyncio.gather(*(worker(i) for i in image_ids))
        report = reduce(RunReport.merge, partials, RunReport())

        compact_shards(self.root)
        self._remove_empty_scratch()
        report.wall_time = time.monotonic() - start
        (self.root / RUN_REPORT_FILE).write_bytes(canonical_json(report.to_dict()))
        logger.info(
            f"Run finished: {report.samples_succeeded}/{report.samples_total} succeeded, "
            f"{report.cache_hits} cache hits, {report.wall_time:.2f}s"
        )
        stats = self.cache.get_stats()
        logger.debug(f"Stage cache: {stats['hits']} hits, {stats['misses']} misses, hit rate {stats['hit_rate']:.2%}")
        return report

    def _prepare_output_root(self) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            marker = self.root / ".write-check"
            marker.write_bytes(b"")
            marker.unlink()
        except OSError as e:
            raise OutputRootUnwritable(f"cannot write to {self.root}: {e}") from e

    def _remove_empty_scratch(self) -> None:
        scratch = self.root / "scratch"
        if not scratch.is_dir():
            return
        for dirpath, _, _ in sorted(os.walk(scratch), key=lambda w: len(w[0]), reverse=True):
            try:
                os.rmdir(dirpath)
            except OSError:
                pass

    def _image_ref(self, image: ImageRecord) -> str:
        if not self.config.image_root:
            return image.file_name
        return str(PurePosixPath(self.config.image_root) / image.file_name)

    async def _run_sample(self, image_id: int) -> RunReport:
        stage = "setup"
        ctx: Optional[SampleContext] = None
        try:
            image = self.index.images[image_id]
            ctx = SampleContext(
                image=image,
                image_ref=self._image_ref(image),
                seed=sample_seed(self.config.seed, image_id),
                label=count_labels(image_id, self.index),
            )
            for kind in plan_sample(image, self.config):
                stage = kind.value
                await self._handlers[kind](ctx)
                ctx.trace.append(kind)
            stage = "store"
            write_sample(self._assemble(ctx), self.root)
        except Exception as e:
            logger.error(f"Sample {image_id} failed at {stage}: {e}")
            return _failed(image_id, stage, str(e), ctx.cache_hits if ctx else 0)
        finally:
            if ctx is not None:
                self.traces[image_id] = list(ctx.trace)

        logger.debug(f"Sample {image_id} done ({ctx.cache_hits} cache hits)")
        return RunReport(samples_total=1, samples_succeeded=1, cache_hits=ctx.cache_hits)

    async def _run_stage(self, ctx: SampleContext, kind: StageKind, request: Any, upstream: Sequence[StageKind],
                         compute=None, assets=lambda response: ()) -> Dict[str, Any]:
        key = stage_key(kind, canonical_json(request.to_payload()), [ctx.keys[u] for u in upstream])
        ctx.keys[kind] = key
        ctx.requests[kind] = request

        async def default_compute() -> Tuple[Dict[str, Any], Iterable[str]]:
            response = await self.gateway.request(request)
            return response.to_payload(), list(assets(response))

        payload, hit = await self.cache.get_or_compute(kind.value, key, compute or default_compute)
        if hit:
            ctx.cache_hits += 1
        return payload

    async def _caption(self, ctx: SampleContext) -> None:
        categories = sorted(ctx.label.per_category)
        request = CaptionRequest(
            prompt=build_caption_prompt(ctx.image, categories, self.caption_template),
            image_ref=ctx.image_ref,
            seed=ctx.seed,
        )
        payload = await self._run_stage(ctx, StageKind.CAPTION, request, ())
        response = CaptionResponse.from_payload(payload)
        ctx.responses[StageKind.CAPTION] = CaptionRecord(image_id=ctx.image.id, text=response.text)

    async def _vqa(self, ctx: SampleContext) -> None:
        caption = ctx.responses[StageKind.CAPTION]
        request = VqaRequest(
            prompt=build_vqa_prompt(ctx.image, caption, self.vqa_template),
            image_ref=ctx.image_ref,
            seed=ctx.seed,
        )

        async def compute() -> Tuple[Dict[str, Any], Iterable[str]]:
            try:
                response = await self.gateway.request(request)
            except BadResponse as e:
                if not isinstance(e.__cause__, WrongPairCount):
                    raise
                logger.warning(f"Sample {ctx.image.id}: {e}; retrying once with a reminder")
                retry = VqaRequest(prompt=request.prompt + VQA_RETRY_REMINDER,
                                   image_ref=request.image_ref, seed=request.seed)
                response = await self.gateway.request(retry)
            return response.to_payload(), ()

        payload = await self._run_stage(ctx, StageKind.VQA, request, (StageKind.CAPTION,), compute=compute)
        text = VqaResponse.from_payload(payload).text
        ctx.responses[StageKind.VQA] = parse_vqa_response(text, image_id=ctx.image.id)

    async def _video(self, ctx: SampleContext) -> None:
        mode = self.config.conditioning_mode
        request = VideoRequest(
            image_ref=None if mode == ConditioningMode.TEXT_ONLY else ctx.image_ref,
            caption="" if mode == ConditioningMode.IMAGE_ONLY else ctx.responses[StageKind.CAPTION].text,
            conditioning_mode=mode,
            num_frames=self.config.num_frames,
            fps=self.config.fps,
            seed=ctx.seed,
            width=self.config.frame_width,
            height=self.config.frame_height,
        )
        payload = await self._run_stage(
            ctx, StageKind.VIDEO, request, (StageKind.CAPTION,),
            assets=lambda response: response.frame_refs,
        )
        ctx.responses[StageKind.VIDEO] = VideoResponse.from_payload(payload, request)

    async def _segment(self, ctx: SampleContext) -> None:
        video = ctx.responses[StageKind.VIDEO]
        request = SegmentRequest(
            frame_ref=video.frame_refs[0],
            width=self.config.frame_width,
            height=self.config.frame_height,
            categories=sorted(ctx.label.per_category),
            seed=ctx.seed,
        )
        payload = await self._run_stage(ctx, StageKind.SEGMENT, request, (StageKind.VIDEO,))
        ctx.responses[StageKind.SEGMENT] = SegmentResponse.from_payload(payload, request)

    async def _propagate(self, ctx: SampleContext) -> None:
        request = PropagateRequest(
            frame_refs=ctx.responses[StageKind.VIDEO].frame_refs,
            objects=ctx.responses[StageKind.SEGMENT].objects,
            seed=ctx.seed,
        )
        payload = await self._run_stage(ctx, StageKind.PROPAGATE, request, (StageKind.SEGMENT, StageKind.VIDEO))
        ctx.responses[StageKind.PROPAGATE] = PropagateResponse.from_payload(payload, request)

    async def _audio(self, ctx: SampleContext) -> None:
        request = AudioRequest(
            frame_refs=ctx.responses[StageKind.VIDEO].frame_refs,
            caption=ctx.responses[StageKind.CAPTION].text,
            seed=ctx.seed,
        )
        payload = await self._run_stage(
            ctx, StageKind.AUDIO, request, (StageKind.VIDEO, StageKind.CAPTION),
            assets=lambda response: [response.audio_ref],
        )
        ctx.responses[StageKind.AUDIO] = AudioResponse.from_payload(payload)

    def _assemble(self, ctx: SampleContext) -> SampleManifest:
        """Materialize sample assets and build its manifest"""
        image_id = ctx.image.id
        asset_dir = PurePosixPath("assets") / str(image_id)
        (self.root / asset_dir / "frames").mkdir(parents=True, exist_ok=True)

        video = [
            self._copy_asset(ref, asset_dir / "frames" / PurePosixPath(ref).name)
            for ref in ctx.responses[StageKind.VIDEO].frame_refs
        ]

        tracks = ctx.responses[StageKind.PROPAGATE].tracks
        tracks_ref = (asset_dir / "tracks.json").as_posix()
        (self.root / tracks_ref).write_bytes(canonical_json({
            "tracks": [
                {**t.to_dict(), "diagnostics": track_diagnostics(t).to_dict()} for t in tracks
            ]
        }))

        audio_ref = None
        if StageKind.AUDIO in ctx.responses:
            ref = ctx.responses[StageKind.AUDIO].audio_ref
            audio_ref = self._copy_asset(ref, asset_dir / f"audio{PurePosixPath(ref).suffix}")

        return SampleManifest(
            image_id=image_id,
            image_ref=ctx.image_ref,
            caption=ctx.responses[StageKind.CAPTION],
            count_label=ctx.label,
            vqa=ctx.responses[StageKind.VQA],
            counting_qa=counts_to_qa(ctx.label),
            video=video,
            tracks=[
                TrackRef(object_id=t.object_id, category=t.category, ref=tracks_ref, num_frames=len(t.frames))
                for t in tracks
            ],
            audio_ref=audio_ref,
        )

    def _copy_asset(self, ref: str, target: PurePosixPath) -> str:
        source = self.root / ref
        if not source.is_file():
            # remote asset, keep the reference
            return ref
        shutil.copyfile(source, self.root / target)
        return target.as_posix()


def _failed(image_id: int, stage: str, error: str, cache_hits: int) -> RunReport:
    return RunReport(
        samples_total=1,
        samples_failed=1,
        cache_hits=cache_hits,
        failures=[StageFailure(image_id=image_id, stage=stage, error=error)],
    )


async def execute_run_async(
    config: PipelineConfig,
    index: DatasetIndex,
    image_ids: Iterable[int],
    gateway: BackendGateway,
) -> RunReport:
    orchestrator = PipelineOrchestrator(config, gateway, index)
    return await orchestrator.run(image_ids)


def execute_run(
    config: PipelineConfig,
    index: DatasetIndex,
    image_ids: Iterable[int],
    gateway: Optional[BackendGateway] = None,
    mock: bool = False,
) -> RunReport:
    """Blocking entry point: generate every sample for ``image_ids``"""
    config.validate()

    async def _main() -> RunReport:
        gw = gateway or make_gateway(config, mock=mock)
        try:
            return await execute_run_async(config, index, image_ids, gw)
        finally:
            if gateway is None:
                await gw.close()

    return asyncio.run(_main())
