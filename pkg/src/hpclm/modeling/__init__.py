from .backends import (
    BackendError,
    ChildExited,
    CompletionBackend,
    GenerationConfig,
    HttpBackend,
    HttpError,
    MalformedResponse,
    NgramBackend,
    OracleBackend,
    ProtocolError,
    SpawnError,
    SubprocessBackend,
    Timeout,
    backend_from_spec,
)
from .ngram import EmptyCorpus, NgramModel, train_ngram
