from .config import RunSpec, dump_spec, load_spec, parse_spec

__all__ = ["RunSpec", "dump_spec", "load_spec", "parse_spec"]
