"""Silhouette-based 6-DoF pose refinement for meshes, with A3DP evaluation.

Subpackages: ``geom`` (quaternions, cameras, boxes), ``mesh`` (OBJ meshes and
projection), ``raster`` (hard and soft silhouettes), ``refine`` (translation
refinement), ``ensemble`` (voting and merging), ``metrics`` (A3DP) and
``harness`` (files, synthetic data, CLI).
"""

__version__ = "0.1.0"
