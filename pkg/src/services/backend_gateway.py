"""
Backend gateway for mmforge
Typed, retrying client for the remote generation stages
"""
import asyncio
import json
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import aiohttp
import backoff

from ..config import BACKOFF_FACTOR, BEARER_TOKEN, STAGE_PATHS
from ..errors import BackendError, BackendTimeout, BadResponse, MalformedPair, RemoteError, \
    TransientExhausted, WrongPairCount
from ..models.backend import (
    AudioRequest, AudioResponse, BackendEndpoint, CaptionRequest, CaptionResponse,
    EmbedRequest, EmbedResponse, PropagateRequest, PropagateResponse, SegmentRequest,
    SegmentResponse, VideoRequest, VideoResponse, VqaRequest, VqaResponse,
)
from .annotation_engine import parse_vqa_response

logger = logging.getLogger(__name__)


class Transport(Protocol):
    """Moves one JSON payload to a backend and returns its JSON reply"""

    async def post(self, endpoint: BackendEndpoint, path: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        ...


class HttpTransport:
    """aiohttp transport; one session shared by every worker"""

    def __init__(self, bearer_token: Optional[str] = BEARER_TOKEN):
        self.bearer_token = bearer_token
        self._session: Optional[aiohttp.ClientSession] = None
        self._lock = asyncio.Lock()

    async def _get_session(self) -> aiohttp.ClientSession:
        async with self._lock:
            if self._session is None or self._session.closed:
                headers = {"Content-Type": "application/json"}
                if self.bearer_token:
                    headers["Authorization"] = f"Bearer {self.bearer_token}"
                self._session = aiohttp.ClientSession(headers=headers)
            return self._session

    async def post(self, endpoint: BackendEndpoint, path: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        session = await self._get_session()
        url = f"{endpoint.base_url.rstrip('/')}{path}"
        try:
            async with session.post(
                url, json=payload, timeout=aiohttp.ClientTimeout(total=endpoint.timeout)
            ) as response:
                body = await response.text()
                if response.status >= 400:
                    code, message = _parse_error(body, response.status)
                    raise RemoteError(code, message)
        except asyncio.TimeoutError as e:
            raise BackendTimeout(f"{endpoint.stage}: no reply from {url} within {endpoint.timeout}s") from e
        except aiohttp.ClientError as e:
            raise RemoteError(503, f"connection error: {e}") from e

        try:
            return json.loads(body)
        except json.JSONDecodeError as e:
            raise BadResponse(f"{endpoint.stage}: reply is not JSON") from e

    async def close(self) -> None:
        if self._session and not self._session.closed:
            await self._session.close()


def _parse_error(body: str, status: int) -> Tuple[int, str]:
    try:
        data = json.loads(body)
        return int(data.get("code", status)), str(data.get("message", ""))
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError):
        return status, body[:200]


def _parse_vqa(data: Dict[str, Any], request: VqaRequest) -> VqaResponse:
    response = VqaResponse.from_payload(data)
    try:
        parse_vqa_response(response.text)
    except (WrongPairCount, MalformedPair) as e:
        raise BadResponse(f"vqa reply rejected: {e}") from e
    return response


# request type -> (stage, response parser)
_DISPATCH: Dict[type, Tuple[str, Callable[[Dict[str, Any], Any], Any]]] = {
    CaptionRequest: ("caption", lambda data, req: CaptionResponse.from_payload(data)),
    VqaRequest: ("vqa", _parse_vqa),
    VideoRequest: ("video", VideoResponse.from_payload),
    SegmentRequest: ("segment", SegmentResponse.from_payload),
    PropagateRequest: ("propagate", PropagateResponse.from_payload),
    EmbedRequest: ("embed", lambda data, req: EmbedResponse.from_payload(data)),
    AudioRequest: ("audio", lambda data, req: AudioResponse.from_payload(data)),
}


def stage_for(request: Any) -> str:
    try:
        return _DISPATCH[type(request)][0]
    except KeyError:
        raise TypeError(f"not a backend request: {type(request).__name__}")


def _is_permanent(error: Exception) -> bool:
    return not getattr(error, "transient", False)


@dataclass
class CallRecord:
    """Outcome of one gateway call"""
    stage: str
    attempts: int
    ok: bool
    error: Optional[str] = None


class BackendGateway:
    """Validating, retrying client shared by all sample workers"""

    def __init__(self, endpoints: Dict[str, BackendEndpoint], transport: Transport):
        self.endpoints = endpoints
        self.transport = transport
        self.history: List[CallRecord] = []
        self.backend_calls = 0

    def endpoint_for(self, stage: str) -> BackendEndpoint:
        try:
            return self.endpoints[stage]
        except KeyError:
            raise BackendError(f"no endpoint configured for stage '{stage}'")

    async def request(self, request: Any) -> Any:
        """Call the endpoint configured for the request's stage"""
        return await self.call(self.endpoint_for(stage_for(request)), request)

    async def call(self, endpoint: BackendEndpoint, request: Any) -> Any:
        """
        Send one stage request.

        Timeouts and 5xx-class errors are retried with exponential backoff and
        full jitter; bad replies and 4xx-class errors fail immediately.
        """
        stage, parse = _DISPATCH[type(request)]
        validate = getattr(request, "validate", None)
        if validate is not None:
            validate()
        path = STAGE_PATHS[stage]
        payload = request.to_payload()
        attempts = 0

        async def attempt() -> Dict[str, Any]:
            nonlocal attempts
            attempts += 1
            self.backend_calls += 1
            try:
                return await asyncio.wait_for(
                    self.transport.post(endpoint, path, payload), timeout=endpoint.timeout
                )
            except asyncio.TimeoutError as e:
                raise BackendTimeout(f"{stage}: timed out after {endpoint.timeout}s") from e

        retrying = backoff.on_exception(
            backoff.expo,
            BackendError,
            max_tries=endpoint.max_retries + 1,
            giveup=_is_permanent,
            on_backoff=lambda details: logger.warning(
                f"{stage}: attempt {details['tries']} failed, retrying in {details['wait']:.3f}s"
            ),
            jitter=backoff.full_jitter,
            base=BACKOFF_FACTOR,
            factor=endpoint.backoff_base / 1000.0,
        )(attempt)

        try:
            data = await retrying()
            if not isinstance(data, dict):
                raise BadResponse(f"{stage}: reply is not a JSON object")
            response = parse(data, request)
        except BackendError as e:
            self.history.append(CallRecord(stage, attempts, False, str(e)))
            if getattr(e, "transient", False):
                logger.error(f"{stage}: retries exhausted after {attempts} attempts: {e}")
                raise TransientExhausted(stage, attempts, e) from e
            logger.error(f"{stage}: backend call failed: {e}")
            raise

        self.history.append(CallRecord(stage, attempts, True))
        return response

    async def close(self) -> None:
        close = getattr(self.transport, "close", None)
        if close is not None:
            await close()
