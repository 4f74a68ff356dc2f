"""Spoofing-enhancement attacks on SSL anti-spoofing models, at desk scale."""

__version__ = "0.1.0"

from .antispoof import (AntispoofConfig, AntispoofModel, antispoof_forward, bonafide_score,
                        bonafide_scores, build_antispoof, train_antispoof)
from .audio import AlignPolicy, Waveform, align_length, read_audio, write_audio
from .enhancer import (ConvTasNet, EnhancerConfig, SpoofPair, build_enhancer, enhance,
                       enhancement_loss, train_enhancer)
from .errors import (AdapterError, ConfigError, ContractError, InvalidInputError,
                     NumericDomainError, ProtocolParseError, ShapeError, SpoofbenchError,
                     UnsupportedFormatError)
from .estimators import AntispoofDetector, SpeakerEmbedder, SpoofEnhancer
from .frontend import FrontendConfig, build_tiny_frontend, frontend_forward, load_external_frontend
from .metrics import ScoreSet, compute_eer, dominance_fraction, emit_report, score_distribution
from .protocol import SplitPlan, TrialRecord, make_split, pair_for_enhancement, parse_protocol
from .speaker import (AAMConfig, LrSchedule, SpeakerExtractor, aam_softmax_loss, build_extractor,
                      extract_embedding, freeze, train_extractor)
