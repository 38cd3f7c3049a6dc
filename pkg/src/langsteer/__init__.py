"""Interactive 2D motion planning with language corrections compiled to cost maps."""

from .costmap import (BaseCostConfig, CorrectionKind, CostMap, CostStack,
                      CostWeights, GroundedCorrection, Mask, VelocityCodes,
                      base_cost, evaluate_stack, masked_cost, rescale,
                      task_cost_at, velocity_penalty)
from .controller import (ControllerConfig, EpisodeResult, ScriptedUser, Session,
                         SessionStatus, create_session, run_episode,
                         submit_correction, tick)
from .grounding import (AmbiguousObjectError, CorrectionError, GroundingError,
                        Intent, Lexicon, ParseError, Relation,
                        UnknownObjectError, classify, default_lexicon, ground,
                        goal_point, load_lexicon, parse, resolve_object)
from .planner import (Planner, PlannerConfig, PathError, grid_shortest_path,
                      path_arc_length, rollout_cost, shortest_path)
from .world import (CATALOG, Environment, GenerationError, GridSpec,
                    InvalidStateError, ObjectInstance, ObjectType, RobotState,
                    Task, collision, generate_environment, make_environment,
                    rasterize_observation, sample_starts, step_dynamics)

__version__ = "0.1.0"
