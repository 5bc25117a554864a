"""seldkit: synthesis and evaluation of spatial sound-event scenes.

The library renders annotated multichannel recordings (static or moving
sources convolved with room or free-field IRs, directional interferers,
SNR-controlled ambience), extracts the standard SELD input features,
encodes/decodes activity-coupled Cartesian DOA targets, and scores
predictions with joint localization/detection metrics.
"""

from .accdoa import AccdoaTensor, decode, encode, frames_to_label_frames
from .arrays import (ArrayModel, GridResponses, anechoic_ir,
                     default_tetrahedral_array, foa_ideal_array,
                     sh_basis_real, steering_response, SAMPLE_RATE)
from .banks import (IrBank, Trajectory, TrajectoryNode, anechoic_twin,
                    build_room_banks, synth_reverb_ir)
from .geometry import (Doa, angular_distance, doa_to_unit_vector,
                       unit_vector_to_doa)
from .metrics import (MetricCounts, MetricsReport, accumulate, evaluate,
                      finalize, pair_within_class, rank_systems)
from .model import (ClassSet, LabelEntry, LabelFrameSet, Moving, SceneEvent,
                    SceneScript, Static, validate_script)
from .oracle import DegradationSpec, degrade
from .render import render_moving, render_static
from .scene import (SampleSpec, SampleStore, assign_spatial, mix_scene,
                    plan_layers, script_labels, synthetic_sample_store)

__version__ = "0.1.0"
