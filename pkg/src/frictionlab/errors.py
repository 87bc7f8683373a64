"""Exception hierarchy.

Every error carries a machine-readable ``code`` so the command-line front end
can surface it as structured JSON.
"""


class FrictionLabError(Exception):
    code = "FRICTIONLAB_ERROR"

    def __init__(self, message="", code=None, **details):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details = details

    def to_dict(self):
        return {"code": self.code, "message": str(self), "details": self.details}


class InvalidFriction(FrictionLabError, ValueError):
    code = "INVALID_FRICTION"


class NonConvexTabulation(InvalidFriction):
    code = "NON_CONVEX_TABULATION"


class InvalidPrice(FrictionLabError, ValueError):
    code = "INVALID_PRICE"


class ConjugateDiverged(FrictionLabError, ArithmeticError):
    code = "CONJUGATE_DIVERGED"


class NotDifferentiable(FrictionLabError, TypeError):
    code = "NOT_DIFFERENTIABLE"


class InvalidMarket(FrictionLabError, ValueError):
    code = "INVALID_MARKET"


class ExplosiveStep(InvalidMarket):
    code = "EXPLOSIVE_STEP"


class EmbeddingNotPSD(FrictionLabError, ArithmeticError):
    code = "EMBEDDING_NOT_PSD"


class ShapeMismatch(FrictionLabError, ValueError):
    code = "SHAPE_MISMATCH"


class BetaOutOfRange(FrictionLabError, ValueError):
    code = "BETA_OUT_OF_RANGE"


class CertificateInvalid(FrictionLabError, ValueError):
    code = "CERTIFICATE_INVALID"


class PlanInfeasibleForClaim(FrictionLabError, ValueError):
    code = "PLAN_INFEASIBLE_FOR_CLAIM"


class Unbounded(FrictionLabError):
    code = "UNBOUNDED"


class MaxIterations(FrictionLabError):
    code = "MAX_ITERATIONS"

    def __init__(self, message="", best=None, **details):
        super().__init__(message, **details)
        self.best = best


class NegativePrices(FrictionLabError, ValueError):
    code = "NEGATIVE_PRICES"


class NonIntegrableUtility(FrictionLabError, ArithmeticError):
    code = "NON_INTEGRABLE_UTILITY"


class PlanNotFlat(FrictionLabError, ValueError):
    code = "PLAN_NOT_FLAT"


class InvalidUtility(FrictionLabError, ValueError):
    code = "INVALID_UTILITY"


class InvalidConfig(FrictionLabError, ValueError):
    code = "INVALID_CONFIG"
