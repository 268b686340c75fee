"""Event-camera stream encodings, segmentation metrics and a toy per-pixel classifier."""

from .dataset import IGNORE_ID, LabelMap, Sample, SequenceManifest, augment, crop_bottom, load_manifest, total_frames
from .encoding import ReprKind, ReprTensor, StreamingAccumulator, encode_batch, normalize_timestamp
from .events import Event, EventStream, SensorGeometry, Window, parse_binary, parse_csv, slice_windows, write_binary
from .metrics import ConfusionMatrix, accumulate_confusion, accuracy, miou
from .synth import SceneObject, SynthConfig, generate_events, render_intensity
from .toyseg import LinearPixelModel, TrainConfig, predict, softmax_xent, train

__version__ = "0.1.0"
