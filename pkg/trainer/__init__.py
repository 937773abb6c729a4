from trainer.trajectory import (
    REWARD_MODES,
    TrajectoryStep,
    Trajectory,
    reward,
    rollout,
    returns_and_advantages,
    stream_rng,
)
from trainer.reinforce_trainer import (
    TrainConfig,
    CurveRecord,
    EvalRecord,
    LearningCurve,
    PolicyAdam,
    reinforce_update,
    evaluate_policy,
    train,
    progress_table,
)
