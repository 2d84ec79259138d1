from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Dict, List, Literal, Optional, Tuple

BIJECTIONS = ("linear", "cube", "negexp", "reciprocal", "log", "sigmoid")
Z_FAMILIES = ("uniform", "normal", "laplace")

BijectionChoice = Literal["linear", "cube", "negexp", "reciprocal", "log", "sigmoid", "random"]
ZFamilyChoice = Literal["uniform", "normal", "laplace", "random"]
Decision = Literal["independent", "dependent"]


class TrainConfig(BaseModel):
    epochs: int = Field(100, ge=0, description="Passes over the data")
    batch_size: int = Field(64, ge=1, description="Mini-batch size")
    learning_rate: float = Field(1e-2, gt=0, description="Adam step size")
    seed: int = Field(0, ge=0, description="Seed for initialization and batch order")


class FlowConfig(BaseModel):
    data_dim: int = Field(..., ge=1, description="Dimension of the modelled variable")
    cond_dim: int = Field(0, ge=0, description="Dimension of the conditioning variable")
    n_components: int = Field(16, ge=1, description="Gaussian mixture components per dimension")
    hidden_dim: int = Field(4, ge=1, description="Hidden units per conditioner network")
    train: TrainConfig = Field(default_factory=TrainConfig)


class EstimatorConfig(BaseModel):
    """Hyperparameters shared by the X and Y flows; dimensions come from the data"""
    n_components: int = Field(16, ge=1)
    hidden_dim: int = Field(4, ge=1)
    train: TrainConfig = Field(default_factory=TrainConfig)

    def flow_config(self, data_dim: int, cond_dim: int) -> FlowConfig:
        return FlowConfig(data_dim=data_dim, cond_dim=cond_dim, n_components=self.n_components,
                          hidden_dim=self.hidden_dim, train=self.train)

    def with_seed(self, seed: int) -> "EstimatorConfig":
        return self.model_copy(update={"train": self.train.model_copy(update={"seed": seed})})


class CITestConfig(BaseModel):
    n_permutations: int = Field(100, ge=1, description="Number of permutations B")
    alpha: float = Field(0.05, gt=0, lt=1, description="Significance level")
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1, description="Threads used for the permutation null")
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)


class ScenarioConfig(BaseModel):
    n: int = Field(..., ge=2, description="Sample count")
    d: int = Field(1, ge=1, description="Shared dimension of X and Y")
    d_z: int = Field(0, ge=0, description="Dimension of Z")
    rho: float = Field(..., gt=-1, lt=1, description="Componentwise correlation of X' and Y'")
    z_family: ZFamilyChoice = "random"
    f_choice: BijectionChoice = "random"
    g_choice: BijectionChoice = "random"
    seed: int = Field(0, ge=0)


class SurrogateDiagnostics(BaseModel):
    x_mean: List[float]
    x_var: List[float]
    y_mean: List[float]
    y_var: List[float]
    clamp_fraction: float = Field(..., ge=0, le=1)


class EstimateResult(BaseModel):
    value: float = Field(..., description="CMI/MI estimate in nats, not clipped at zero")
    n: int
    dims: Tuple[int, int, int]
    loss_trace: List[float]
    surrogate_diagnostics: SurrogateDiagnostics
    seed: int


class CITestResult(BaseModel):
    statistic: float
    p_value: float = Field(..., ge=0, le=1)
    permuted_stats: List[float]
    decision: Decision
    alpha: float
    seed: int


class BenchmarkConfig(BaseModel):
    task: Literal["mi", "cmi", "cit"]
    n: List[int] = Field(default_factory=lambda: [1000])
    d: List[int] = Field(default_factory=lambda: [1])
    rho: List[float] = Field(default_factory=lambda: [0.0])
    d_z: List[int] = Field(default_factory=lambda: [1])
    runs: int = Field(10, ge=1, description="Runs per cell (per label for cit)")
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    n_permutations: int = Field(100, ge=1)
    alpha: float = Field(0.05, gt=0, lt=1)
    z_family: ZFamilyChoice = "random"
    f_choice: BijectionChoice = "random"
    g_choice: BijectionChoice = "random"
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)

    @field_validator("n", "d", "rho", "d_z")
    def validate_grid_axis(cls, v):
        if not v:
            raise ValueError("Benchmark grid axes cannot be empty")
        return v

    @field_validator("rho")
    def validate_rho(cls, v):
        if any(not -1 < r < 1 for r in v):
            raise ValueError("Correlations must lie strictly inside (-1, 1)")
        return v

    @model_validator(mode="after")
    def validate_task_grid(self):
        if self.task == "mi":
            self.d_z = [0]
        elif any(dz < 1 for dz in self.d_z):
            raise ValueError("Conditional tasks need d_z >= 1")
        return self


class RunRecord(BaseModel):
    task: str
    cell: int
    run: int
    n: int
    d: int
    d_z: int
    rho: float
    z_family: str
    f_choice: str
    g_choice: str
    method: str = "dine"
    estimate: float
    p_value: Optional[float] = None
    label: Optional[Decision] = None
    ground_truth: float
    seed: int
    wall_time: float = 0.0


class MetricsSummary(BaseModel):
    cell: int
    n: int
    d: int
    d_z: int
    alpha: float
    f1: float = Field(..., ge=0, le=1)
    auc: Optional[float] = Field(None, ge=0, le=1)
    type1_rate: Optional[float] = Field(None, ge=0, le=1)
    type2_rate: Optional[float] = Field(None, ge=0, le=1)
    counts: Dict[str, int]
    warnings: List[str] = []


class CellSummary(BaseModel):
    cell: int
    n: int
    d: int
    d_z: int
    rho: float
    runs: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    ground_truth: float
    bias: float
