import math

def planner(obs, action_space, task):
    '''
        Parameters:
            obs is a dict with the following format:
                {
                    "Resource": {
                        "supply_cap": 15,
                        "supply_left": 3,
                        "gas": 0
                    },
                    "Building": {
                        "COMMANDCENTER": 1,
                        "BARRACKS": 0,
                        "SUPPLYDEPOT": 0, 
                        "REFINERY": 0,
                        // ...
                    },
                    "Unit": {
                        "SCV": 12,
                        "MARINE": 0,
                        // ...
                    }
                }
                with the specified number of each resource/building/unit in the current game state
                
            action_space is a list of strings including all the available actions

            task is a unit dict:
                {
                    "SCV": "num_1",
                    "BATTLECRUISER": "num_2"
                }
                with the goal of training the specified quantities of the corresponding type of units in the game.
    '''
    plan_build = []
    plan_unit = []

    # infer the tech_tree from the unit of the task
    tech_tree = {
        "SCV": {
            "base_building": "COMMANDCENTER",
            "pre_dependency": {},
        },
        "BATTLECRUISER": {
            "base_building": "STARPORTTECHLAB",
            "pre_dependency": {
                1: "SUPPLYDEPOT",
                2: "BARRACKS",
                3: "FACTORY",
                4: "STARPORT",
            },
        }
    }
    
    # obtain the base_building for the technology
    base_buildings = {k: v["base_building"] for k, v in tech_tree.items()}

    '''
        when supply_left is less than 8, increasing supply_cap (BUILD SUPPLYDEPOT) is necessary.
    '''
    if obs["Resource"]["supply_left"] < 8:
        if "BUILD SUPPLYDEPOT" in action_space:
            plan_build.append("BUILD SUPPLYDEPOT")
    
    '''
        gas is important, check if there is a need to collecting gas (BUILD REFINERY).
    '''
    if "BUILD REFINERY" in action_space and obs["Resource"]["gas"] == 0:
        plan_build.append("BUILD REFINERY")
        
    '''
        Check the 'unit' that still need to be trained in the current game state, and add f'TRAIN {unit}' to the plan_unit for each unit in units. You need to ensure that f'TRAIN {unit}' is in the action_space.
    ''' 
    unit_still_needed_num = {unit: max(0, task[unit] - obs["Unit"].get(unit, 0)) for unit in task}
    for unit, target_num in unit_still_needed_num.items():
        if f"TRAIN {unit}" in action_space and target_num > 0:
            plan_unit.append(f"TRAIN {unit}")
            
    '''
        calculate the number still needed for each base_building in the task
    '''
    scale_of_scv_per_base_building = 16
    scale_of_otherunit_per_base_building = 8
    base_building_needed_num = {building: 0 for _, building in base_buildings.items()}
    for unit, target_num in task.items():
        if unit == "SCV":
            base_building_needed_num[base_buildings[unit]] += math.ceil(task[unit] / scale_of_scv_per_base_building)
        else:
            base_building_needed_num[base_buildings[unit]] += math.ceil(task[unit] / scale_of_otherunit_per_base_building)

    '''
        Based on the tech_tree, analyze which 'building' are still needed for each unit in the task at the current game state. Then add f'BUILD {building}' to the plan_build for each building in required buildings. You need to ensure that f'BUILD {building}' is in the action_space.
    '''
    for unit, tech in tech_tree.items():
        pre_dependency = tech.get("pre_dependency")
        base_building = tech.get("base_building")
        # first check pre_dependency, as only when the pre_dependency is met can the base_building be constructed.
        if pre_dependency:
            pre_dependency = dict(sorted(pre_dependency.items(), key=lambda x: x[0]))
            for priority, building in pre_dependency.items():
                # only need 1 for each building in pre_dependency
                if f"BUILD {building}" in action_space and obs["Building"].get(building, 0) == 0:
                    plan_build.append(f"BUILD {building}")
                    
        # then check the base_building
        if f"BUILD {base_building}" in action_space and obs["Building"].get(base_building, 0) < base_building_needed_num[base_building]:
            plan_build.append(f"BUILD {base_building}")
    
    # mix the plan_build and plan_unit alternately to get the plan
    plan = []
    while plan_build or plan_unit:
        if plan_build:
            plan.append(plan_build.pop(0))
        if plan_unit:
            plan.append(plan_unit.pop(0))

    # return the first 5 actions as a plan
    return plan[:5]
