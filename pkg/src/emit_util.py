from typing import Callable,Optional

StatusCB = Callable[[dict],None]

def emit(status_cb:Optional[StatusCB],event:dict):
    if status_cb:
        status_cb(event)
    else:
        print(event.get("message",""))


def emit_progress(status_cb:Optional[StatusCB],stage:str,done:int,total:int,every:int = 1):
    """
    Emit a progress event for a long-running stage, thinned to one event per `every` units of work.
    The final unit always emits so callers see completion.
    @param stage: name of the running stage ("campaign", "sweep", "best_response")
    @param done: completed units of work
    @param total: total units of work
    """
    if done != total and (every <= 0 or done % every != 0):
        return
    emit(status_cb,{
        "type":"progress",
        "stage":stage,
        "done":done,
        "total":total,
        "message":f"  {stage}: {done}/{total}",
    })
