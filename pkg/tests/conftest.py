import pytest

from gridshed import instances


@pytest.fixture(scope="session")
def microgrid_case():
    """The bundled 23-bus, 6-block networked microgrid with its base scenario."""
    return instances.load_case(
        instances.thirteen_bus_network(), instances.thirteen_bus_scenario()
    )


@pytest.fixture(scope="session")
def desk_case():
    return instances.load_case(
        instances.desk_network(seed=0), instances.desk_scenario(seed=0)
    )


def free_semantic_binaries(model):
    """Free binary columns the enumeration oracle actually walks."""
    return [
        c for c in model.free_binary_columns()
        if model.variables[c].family != "phi"
    ]
