"""Incremental 3D shape recognition with depth-rectified point features."""

from .clouds import (CLASS_CATALOG, SHAPE_KINDS, PointCloud, generate_shape,
                     load_xyz, make_dataset, normalize_unit_sphere, save_xyz,
                     scan_dataset)
from .config import DEFAULTS, load_config, parse_config, write_config
from .encoders import (DepthFeatureSet, EncoderConfig, FrozenImageTower,
                       PointEncoder, PointFeatureSet, encode_depth,
                       encode_points, param_checksum, tokenize_points,
                       zero_shot_logits)
from .metrics import avg_accuracy, forgetting, read_report, write_report
from .network import RectifiedShapeNet
from .prototypes import PrototypeMatrix, text_prototypes
from .rectify import (CrossViewAggregator, attention, fuse_layer,
                      masked_attention, mc_loss)
from .rendering import (BackgroundMasks, DepthMap, EnhancedImage,
                        ViewTransform, camera_views, compose_enhanced,
                        detect_background, export_image, read_image,
                        render_depth)
from .routing import (Discriminator, bnd_loss, predict_with_routing,
                      relabel_binary, route, select_exemplars)
from .schedule import ExemplarStore, IncrementalSchedule, build_schedule
from .texture import ColorGenerator, LogitsBundle, alignment_loss, fused_logits, synth_color
from .training import (RunState, TrainConfig, build_cache, cosine_lr,
                       evaluate, prepare_run, run_all_tasks, save_run,
                       train_base, train_incremental)

__version__ = "0.1.0"
