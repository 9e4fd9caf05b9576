from typing import Literal
import workspace.MBPP.workflows.template.operator as operator
import workspace.MBPP.workflows.round_8.prompt as prompt_custom
from scripts.async_llm import create_llm_instance
import weave


DatasetType = Literal["HumanEval", "MBPP", "GSM8K", "MATH", "HotpotQA", "DROP"]

class Workflow:
    def __init__(
        self,
        name: str,
        llm_config,
        dataset: DatasetType,
    ) -> None:
        self.name = name
        self.dataset = dataset
        self.llm = create_llm_instance(llm_config)
        self.custom = operator.Custom(self.llm)
        self.custom_code_generate = operator.CustomCodeGenerate(self.llm)
        self.sc_ensemble = operator.ScEnsemble(self.llm)
        self.test = operator.Test(self.llm)

    @weave.op()
    async def __call__(self, problem: str, entry_point: str):
        """
        Implementation of the workflow
        Custom operator to generate anything you want.
        But when you want to get standard code, you should use custom_code_generate operator.
        """
        # Generate two solutions using different instructions
        solution_1 = await self.custom_code_generate(problem=problem, entry_point=entry_point, instruction=prompt_custom.CODE_GENERATE_PROMPT)
        solution_2 = await self.custom_code_generate(problem=problem, entry_point=entry_point, instruction=prompt_custom.CODE_GENERATE_PROMPT)
        # Generate an optimized solution
        optimized_solution = await self.custom_code_generate(problem=problem, entry_point=entry_point, instruction=prompt_custom.OPTIMIZED_CODE_PROMPT)
        # Attempt to fix the code if necessary
        fix_attempt = await self.custom_code_generate(problem=problem, entry_point=entry_point, instruction=prompt_custom.FIX_CODE_PROMPT)

        # Use ensemble to select the best solution
        ensemble_response = await self.sc_ensemble(solutions=[solution_1['response'], solution_2['response'], optimized_solution['response'], fix_attempt['response']], problem=problem)

        # Test the selected solution
        test_response = await self.test(problem=problem, solution=ensemble_response['response'], entry_point=entry_point)

        # Return the final response and cost
        return test_response['solution'], self.llm.get_usage_summary()["total_cost"]

