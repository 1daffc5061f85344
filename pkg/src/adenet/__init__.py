"""Speaker-activity-driven target speech extraction toolkit."""

from .activity import (
    FrameActivity,
    SegmentList,
    VadConfig,
    energy_vad,
    jitter_segments,
    overlap_ratio,
    read_rttm,
    read_segments_file,
    remove_overlap,
    segments_to_frames,
    write_segments_file,
)
from .dsp import (
    AudioSignal,
    ComplexSpectrogram,
    FeatureSequence,
    MaskSequence,
    StftConfig,
    apply_mask,
    istft,
    log_amplitude,
    read_wav,
    stft,
    write_wav,
)
from .errors import (
    AdenetError,
    CheckpointError,
    ConfigurationError,
    InvalidInputError,
    InvalidStateError,
    NoActiveFramesError,
    NotSupportedError,
    UnsupportedFormatError,
)
from .evaluation import (
    EvalReport,
    cpwer,
    evaluate_matrix,
    evaluate_session,
    inactivity_mask_baseline,
    sdr,
    session_extract,
)
from .models import (
    Checkpoint,
    ExtractionModel,
    ModelConfig,
    SpeakerEmbedding,
    TrainConfig,
    forward_extract,
    train,
)
from .simulate import (
    MixtureSample,
    SessionRecording,
    SpeakerProfile,
    apply_synthetic_rir,
    default_profiles,
    gen_dataset,
    gen_session,
    gen_source,
    load_dataset,
    mix_two,
    save_dataset,
)

__version__ = "0.1.0"
