from surrogate.mlp import MlpLayer, MlpModel, SurrogateTrainConfig, mlp_forward, train_device_model
from surrogate.device_data import (
    DeviceProfile,
    DeviceDataset,
    gen_synthetic_device_data,
    ground_truth,
    make_device_profiles,
    load_profiles,
)
from surrogate.objective import (
    EvaluationCounter,
    Objective,
    SurrogateObjective,
    GroundTruthObjective,
    CallableObjective,
    aggregate_eval,
)
