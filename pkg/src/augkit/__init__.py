"""Data-augmentation toolkit for text-dependent speaker verification."""

from .audio_dsp import Waveform, read_wav, speed_perturb, synth_tone, write_wav
from .augmentation import (FilterPolicy, filter_generated, generation_budget, pitch_shift_augment,
                           speaker_centroids, surrogate_vc)
from .embedder import SpeakerEmbedding, embed, gsp_pool, init_encoder, load_embeddings
from .features import FeatureConfig, FeatureMatrix, log_mel, mel_filterbank, stft_power
from .losses_training import (ArcFaceConfig, HeadParams, TrainSchedule, VCLossComponents, arcface_forward,
                              arcface_grad, embedding_feedback_loss, train_head, vc_total_loss)
from .scoring_metrics import DcfConfig, compute_eer, compute_min_dcf, cosine, score_trials
from .store import AugmentationRecord, ManifestEntry, Trial

__version__ = "0.1.0"
