"""Interactive deformable porous solids: wetting, elasticity, contact.

The package simulates tetrahedral soft bodies whose stiffness responds to
absorbed water, steered by a haptic-style tool with continuous collision
detection and penalty contact. A coarse simulation mesh drives a detailed
surface through a cage embedding; sessions replay deterministically from
scripted tool paths or stream live to a browser client.
"""

from .errors import (PorosimError, MeshError, MaterialError, SceneError,
                     StabilityError, SolverError)
from .materials import (IsotropicElastic, PorousMaterial, ElasticityTensor,
                        isotropic_stiffness, isotropic_compliance,
                        eshelby_spherical, voigt_upper, reuss_lower,
                        inclusion_compliance, bounds_check, project_to_bounds,
                        effective_compliance, effective_stiffness)
from .mesh import (TetMesh, SurfaceMesh, CageEmbedding, load_tet_mesh,
                   save_tet_mesh, load_obj, save_obj, build_embedding,
                   apply_embedding, paint_highlight)
from .wetting import (WATER_DENSITY, DiffusionParams, TetAdjacency,
                      SaturationField, diffuse_step, absorb, dry,
                      stability_ratio, saturation_to_phi, transfer_wetness)
from .fem import (SimParams, PlasticityParams, DampingKernelParams,
                  StepDiagnostics, SystemState, build_state, step,
                  apply_plastic_flow, damping_weights, apply_damping_kernel,
                  refresh_element_material, set_element_phi)
from .collision import (MovingVertex, MovingEdge, MovingTriangle,
                        PenetrationInterval, ContactEvent, PrimitiveSet,
                        ContactDiagnostics, cubic_roots, coplanarity_filter,
                        ccd_vertex_face, ccd_edge_edge, penetration_intervals,
                        points_inside, find_contacts)
from .haptics import (MODES, ForceSample, Mailbox, Pose, IDENTITY_POSE,
                      interpolate_pose, ToolProxy, ImpulseResult,
                      interval_integral, accumulate_impulses, jitter_histogram)
from .session import (SceneConfig, ToolPathScript, Keyframe, StepRecord,
                      Session, parse_scene, parse_script, load_scene,
                      load_script, run_replay, build_summary, export_state,
                      import_state)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
