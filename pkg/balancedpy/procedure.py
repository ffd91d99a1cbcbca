from balancedpy.measure import WeightedSampleSet


class SamplingProcedure(object):
    """A randomized sampling procedure produces a weighted sample (x_i, w_i, alpha_i) for a family. This parent class should be inherited by each concrete sampler (uniform, i.i.d., leverage, BSS)."""

    name = "procedure"

    def __init__(self, epsilon: float, **kwargs) -> None:
        """SamplingProcedure class constructor"""
        raise NotImplementedError

    def run(self, fam, rng) -> WeightedSampleSet:
        """Draws one weighted sample

        Parameters
        ----------
        fam : OrthonormalFamily
            family and reference measure D
        rng : np.random.Generator
            random source
        """
        raise NotImplementedError

    def rescale(self, epsilon: float) -> "SamplingProcedure":
        """Returns the same procedure targeting a different accuracy"""
        raise NotImplementedError

    def __repr__(self) -> str:
        return "{}(epsilon={})".format(type(self).__name__, getattr(self, "epsilon", None))


def procedure_from_name(name: str, epsilon: float, **kwargs) -> SamplingProcedure:
    """Builds a procedure from a command-line sampler name

    Parameters
    ----------
    name : str
        uniform, leverage, bss or iid:<measure-name>
    epsilon : float
        target accuracy
    **kwargs
        forwarded to the procedure constructor (m, C1, config, quiet)
    """

    from balancedpy.sampler_iid import UniformProcedure, IidProcedure, LeverageProcedure
    from balancedpy.sampler_bss import BssProcedure
    from balancedpy.measure import parse_measure

    kind, _, arg = name.partition(":")
    if kind == "uniform":
        return UniformProcedure(epsilon, **kwargs)
    elif kind == "leverage":
        return LeverageProcedure(epsilon, **kwargs)
    elif kind == "bss":
        return BssProcedure(epsilon, **kwargs)
    elif kind == "iid":
        if not arg:
            raise ValueError("Sampler 'iid' needs a measure, as in iid:chebyshev-grid:1001")
        return IidProcedure(epsilon, parse_measure(arg), **kwargs)
    raise ValueError("Unknown sampler '{}', expected uniform, leverage, bss or iid:<measure>".format(name))
