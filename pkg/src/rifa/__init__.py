"""Unbiased scene-graph relation extraction at desk scale.

Subject/object pair embeddings, connection-strength pair filtering, relation
prediction with imbalance-compensating losses, relation-score ranking, and
property-aware recall metrics, plus a synthetic scene generator.
"""

from .scenedata import BBox, Entity, RunConfig, Scene, Triple, Vocab, load_dataset, save_dataset
from .pipeline import RifaModel, load_checkpoint, predict_dataset, predict_scene, save_checkpoint, train
from .metrics import MetricsSummary, evaluate
from .synthgen import GenConfig, generate_dataset

__version__ = "0.1.0"
